"""Command-line interface: the full pipeline in one binary.

Subcommands: ``schema`` (infer a schema from data), ``build`` (construct
a model), ``train``, ``eval``, ``marginal``, ``classify``, ``sample``,
``validate`` (structure checks, ``--deep`` adds engine oracles), and
``missing-sweep`` (classification accuracy versus the fraction of
randomly masked leaves).

Option precedence is flags > config file > built-in defaults.  The
config file is a flat ``key=value`` text format where keys are long
option names without the leading dashes (``step=0.01``, ``n-l=3``).
"""

from __future__ import annotations

import argparse
import csv
import sys

from . import builder, circuit as ci, learn, oracle, sample as sa, schema as sc
from . import inference as inf
from . import trees as tr
from .errors import DataError, SpsnError, ValidationFailure
from .rng import substream

_CONVERTERS = {}


def _parse_bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _read_config(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError("config line without '=': %r" % line)
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _fractions(text):
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _build_parser(suppress=False):
    """Build the CLI parser.  With ``suppress`` set, every option loses its
    default, so the parsed namespace contains exactly the flags given on
    the command line; that is how config-file values learn which options
    they may fill in."""

    def _add(parser, *flags, **kw):
        conv = kw.get("type", str)
        if kw.get("action") in ("store_true", "store_false"):
            conv = _parse_bool
        if suppress:
            kw["default"] = argparse.SUPPRESS
        action = parser.add_argument(*flags, **kw)
        _CONVERTERS[(parser.prog, action.dest)] = conv
        return action

    top = argparse.ArgumentParser(prog="spsn", description=__doc__)
    top.add_argument("--config",
                     default=argparse.SUPPRESS if suppress else None,
                     help="flat key=value config file (flags win)")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schema", help="infer a schema from JSONL or a .json dir")
    _add(p, "--data", required=True)
    _add(p, "--out", required=True)

    p = sub.add_parser("build", help="construct a model from a schema")
    _add(p, "--schema", required=True)
    _add(p, "--n-l", type=int, default=2)
    _add(p, "--n-s", type=int, default=2)
    _add(p, "--n-p", type=int, default=2)
    _add(p, "--classes", type=int, default=1)
    _add(p, "--k-cat", type=int, default=100)
    _add(p, "--k-max", type=int, default=None)
    _add(p, "--out", required=True)

    p = sub.add_parser("train", help="gradient training")
    _add(p, "--model", required=True)
    _add(p, "--data", required=True)
    _add(p, "--objective", choices=(learn.NLL, learn.CROSS_ENTROPY),
         default=learn.NLL)
    _add(p, "--labels", default=None)
    _add(p, "--step", type=float, default=0.01)
    _add(p, "--batch", type=int, default=10)
    _add(p, "--epochs", type=int, default=20)
    _add(p, "--seed", type=int, default=0)
    _add(p, "--val-fraction", type=float, default=0.2)
    _add(p, "--no-init", action="store_true",
         help="skip data-driven initialization")
    _add(p, "--out", required=True)
    _add(p, "--history", default=None)

    for name, hlp in (("eval", "log density per document (full evidence)"),
                      ("marginal", "log marginal per document (missing allowed)")):
        p = sub.add_parser(name, help=hlp)
        _add(p, "--model", required=True)
        _add(p, "--data", required=True)
        _add(p, "--root", type=int, default=0)
        _add(p, "--out", required=True)

    p = sub.add_parser("classify", help="class posteriors per document")
    _add(p, "--model", required=True)
    _add(p, "--data", required=True)
    _add(p, "--out", required=True)

    p = sub.add_parser("sample", help="draw documents from the model")
    _add(p, "--model", required=True)
    _add(p, "--n", type=int, default=1000)
    _add(p, "--seed", type=int, default=7)
    _add(p, "--root", type=int, default=0)
    _add(p, "--out", required=True)

    p = sub.add_parser("validate", help="structural (and optionally deep) checks")
    _add(p, "--model", required=True)
    _add(p, "--deep", action="store_true")
    _add(p, "--seed", type=int, default=0)

    p = sub.add_parser("missing-sweep",
                       help="accuracy vs fraction of masked leaves")
    _add(p, "--model", required=True)
    _add(p, "--data", required=True)
    _add(p, "--labels", required=True)
    _add(p, "--fractions", type=_fractions, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    _add(p, "--repeats", type=int, default=5)
    _add(p, "--seed", type=int, default=0)
    _add(p, "--out", required=True)

    return top


def _load_labels(path):
    """labels.csv: header doc_id,label; doc_id is the 0-based data row."""
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows[int(rec["doc_id"])] = rec["label"]
    if not rows:
        raise DataError("empty labels file %s" % path)
    return [rows[i] for i in sorted(rows)]


def _labels_to_indices(labels, class_labels=None):
    if class_labels is None:
        class_labels = tuple(sorted(set(labels)))
    index = {lab: i for i, lab in enumerate(class_labels)}
    try:
        return [index[lab] for lab in labels], class_labels
    except KeyError as exc:
        raise DataError("label %r not among model classes %r"
                        % (exc.args[0], class_labels))


def _cmd_schema(args):
    schema = sc.infer_schema(tr.iter_raw_documents(args.data))
    sc.save_schema(schema, args.out)
    print("schema written to %s" % args.out)
    return 0


def _cmd_build(args):
    schema = sc.load_schema(args.schema)
    cfg = builder.BuildConfig(n_c=args.classes, n_l=args.n_l, n_s=args.n_s,
                              n_p=args.n_p, k_cat=args.k_cat, k_max=args.k_max)
    model = builder.spsn_network(schema, cfg)
    report = ci.validate_structure(model)
    if not report.ok:
        raise ValidationFailure(str(report))
    ci.save_model(model, args.out)
    counts = ci.count_units(model)
    print("model written to %s (%s)" % (
        args.out, ", ".join("%s=%d" % kv for kv in sorted(counts.items()))))
    return 0


def _cmd_train(args):
    model = ci.load_model(args.model)
    corpus = tr.load_corpus(args.data, model.schema)
    labels = None
    if args.objective == learn.CROSS_ENTROPY:
        if not args.labels:
            raise DataError("cross-entropy training requires --labels")
        raw = _load_labels(args.labels)
        if len(raw) != len(corpus):
            raise DataError("%d labels for %d documents" % (len(raw), len(corpus)))
        idx, class_labels = _labels_to_indices(raw, model.class_labels)
        if len(class_labels) != model.n_classes:
            raise DataError("model has %d roots but data has %d classes"
                            % (model.n_classes, len(class_labels)))
        model.class_labels = class_labels
        labels = idx
    if not args.no_init:
        model = learn.init_params(model, corpus, seed=args.seed)
    cfg = learn.TrainConfig(objective=args.objective, step_size=args.step,
                            batch_size=args.batch, epochs=args.epochs,
                            seed=args.seed,
                            validation_fraction=args.val_fraction)
    result = learn.fit(model, corpus, cfg, labels=labels)
    ci.save_model(result.circuit, args.out)
    if args.history:
        with open(args.history, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_objective", "val_objective", "best"])
            for row in result.history:
                w.writerow([row["epoch"], repr(row["train_objective"]),
                            repr(row["val_objective"]), int(row["best"])])
    print("trained model written to %s (selected epoch %d)"
          % (args.out, result.selected_epoch))
    return 0


def _cmd_scores(args, marginal):
    model = ci.load_model(args.model)
    corpus = tr.load_corpus(args.data, model.schema)
    fn = inf.marginal_log_density if marginal else inf.log_density
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["doc_id", "log_density"])
        for i, tree in enumerate(corpus):
            w.writerow([i, repr(fn(model, args.root, tree))])
    print("scores written to %s" % args.out)
    return 0


def _cmd_classify(args):
    model = ci.load_model(args.model)
    corpus = tr.load_corpus(args.data, model.schema)
    names = model.class_labels or tuple(range(model.n_classes))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["doc_id", "class"]
                   + ["logpost_%s" % n for n in names])
        for i, tree in enumerate(corpus):
            k, post = inf.classify(model, tree)
            w.writerow([i, names[k]] + [repr(float(x)) for x in post])
    print("predictions written to %s" % args.out)
    return 0


def _cmd_sample(args):
    model = ci.load_model(args.model)
    sa.sample_corpus(model, args.n, args.seed, args.out, root=args.root)
    print("%d samples written to %s" % (args.n, args.out))
    return 0


def _cmd_validate(args):
    model = ci.load_model(args.model)
    report = ci.validate_structure(model)
    print(report)
    failed = not report.ok
    if args.deep:
        for check in oracle.deep_check(model, seed=args.seed):
            print("%-16s %s  (%s)" % (check.name,
                                      "PASS" if check.ok else "FAIL",
                                      check.detail))
            failed = failed or not check.ok
    if failed:
        raise ValidationFailure("validation failed")
    return 0


def _cmd_missing_sweep(args):
    model = ci.load_model(args.model)
    corpus = tr.load_corpus(args.data, model.schema)
    raw = _load_labels(args.labels)
    if len(raw) != len(corpus):
        raise DataError("%d labels for %d documents" % (len(raw), len(corpus)))
    idx, _ = _labels_to_indices(raw, model.class_labels)
    rows = []
    for fi, fraction in enumerate(args.fractions):
        for rep in range(args.repeats):
            rng = substream(args.seed, "sweep", fi, rep)
            hits = 0
            for tree, y in zip(corpus, idx):
                masked = tr.mask_missing(tree, fraction, rng=rng)
                k, _ = inf.classify(model, masked)
                hits += int(k == y)
            rows.append((fraction, rep, hits / len(corpus)))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fraction", "repeat", "accuracy"])
        for fraction, rep, acc in rows:
            w.writerow([repr(fraction), rep, repr(acc)])
    print("sweep written to %s" % args.out)
    return 0


_COMMANDS = {
    "schema": _cmd_schema,
    "build": _cmd_build,
    "train": _cmd_train,
    "eval": lambda a: _cmd_scores(a, marginal=False),
    "marginal": lambda a: _cmd_scores(a, marginal=True),
    "classify": _cmd_classify,
    "sample": _cmd_sample,
    "validate": _cmd_validate,
    "missing-sweep": _cmd_missing_sweep,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.config:
        explicit = _build_parser(suppress=True).parse_args(argv)
        prog = "spsn " + args.command
        for key, raw in _read_config(args.config).items():
            conv = _CONVERTERS.get((prog, key))
            if conv is None or hasattr(explicit, key):
                continue  # unknown for this command, or overridden by a flag
            setattr(args, key, conv(raw))
    try:
        return _COMMANDS[args.command](args)
    except SpsnError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
