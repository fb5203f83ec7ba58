"""Command-line entry point: ``weakseg <command> ...``.

Exit status: 0 success, 1 user error (bad flags, missing files, failed check),
2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .core import Transcript, load_dataset, read_label_file, save_dataset, validate_dataset, write_label_file
from .metrics import evaluate
from .render import render_timelines
from .scorer import scorer_forward
from .seggraph import build_graph
from .synth import SynthConfig, generate_synthetic, train_test_split
from .trainer import TrainConfig, decode, load_state, save_state, train

log = logging.getLogger("weakseg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {s}")
    return v


def cmd_gen(args) -> int:
    cfg = SynthConfig(
        K=args.K, D=args.D, n_videos=args.videos + args.test, transcript_length=(args.min_len, args.max_len),
        mean_length=args.mean_length, noise=args.noise, center_scale=args.center_scale,
        background_prob=args.bg_prob, n_templates=args.templates, seed=args.seed,
    )
    d = generate_synthetic(cfg)
    out = Path(args.out)
    if args.test:
        tr, te = train_test_split(d, args.test)
        save_dataset(tr, out / "train")
        save_dataset(te, out / "test")
        print(f"wrote {len(tr)} training videos to {out / 'train'} and {len(te)} test videos to {out / 'test'}")
    else:
        save_dataset(d, out)
        print(f"wrote {len(d)} videos to {out}")
    return 0


def _load_valid(path):
    d = load_dataset(path)
    problems = validate_dataset(d)
    if problems:
        raise UsageError(f"{path}: invalid dataset:\n  " + "\n  ".join(problems))
    if len(d) == 0:
        raise UsageError(f"{path}: no videos")
    return d


def cmd_train(args) -> int:
    d = _load_valid(args.data)
    cfg = TrainConfig(window=args.window, loss=args.loss, alpha=args.alpha, iterations=args.iters, lr=args.lr,
                      lr_drop_at=args.lr_drop_at, lr_dropped=args.lr_dropped, seed=args.seed,
                      scorer=args.scorer, hidden=args.hidden, max_segment_length=args.max_segment_length)
    log_path = args.log or str(Path(args.out).with_suffix(".log"))
    with open(log_path, "w") as fh:
        state = train(cfg, d, log_file=fh)
    save_state(state, args.out)
    print(f"trained {cfg.iterations} iterations; checkpoint {args.out}, log {log_path}")
    return 0


def _decode_all(args, with_pool: bool) -> int:
    d = _load_valid(args.data)
    state = load_state(args.model)
    if state.K != d.label_set.K:
        raise UsageError(f"model has {state.K} classes, dataset mapping has {d.label_set.K}")
    pool = None
    if with_pool:
        pool = state.transcripts
        if args.pool:
            pool = sorted(set(load_dataset(args.pool, d.label_set).transcripts()))
        if not pool:
            raise UsageError("empty transcript pool")
    out = Path(args.out)
    os.makedirs(out, exist_ok=True)
    if args.dump_graph:
        os.makedirs(args.dump_graph, exist_ok=True)
    names = d.label_set.names
    for v in d.videos:
        cands = pool if with_pool else [Transcript(v.transcript)]
        res = decode(state, v, cands, args.window, args.max_segment_length)
        write_label_file(out / f"{v.video_id}.txt", [names[a] for a in res.segmentation.to_frames()])
        if args.dump_graph:
            post, _ = scorer_forward(state.params, v.features)
            g = build_graph(res.anchor, post, args.window)
            with open(Path(args.dump_graph) / f"{v.video_id}.graph.txt", "w") as fh:
                fh.write(g.dump(res.transcript, names))
        log.info("%s: energy %.6g (anchor %.6g)", v.video_id, res.energy, res.anchor_energy)
    print(f"wrote {len(d)} predictions to {out}")
    return 0


def cmd_segment(args) -> int:
    return _decode_all(args, with_pool=True)


def cmd_align(args) -> int:
    return _decode_all(args, with_pool=False)


def cmd_eval(args) -> int:
    d = load_dataset(args.data)
    ls = d.label_set
    gts, preds = {}, {}
    for v in d.videos:
        if v.ground_truth is None:
            raise UsageError(f"{v.video_id}: no ground truth")
        p = Path(args.pred) / f"{v.video_id}.txt"
        if not p.exists():
            raise UsageError(f"missing prediction {p}")
        gts[v.video_id] = v.ground_truth
        preds[v.video_id] = ls.encode(read_label_file(p))
    report = evaluate(preds, gts, ls.background_id)
    text = report.to_lines() if args.format == "lines" else report.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_render(args) -> int:
    rows = [(args.title or Path(args.seg).stem, read_label_file(args.seg))]
    if args.gt:
        rows.insert(0, ("ground truth", read_label_file(args.gt)))
    svg = render_timelines(rows, width=args.width)
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return 0


def cmd_oracle_check(args) -> int:
    from .oracle import run_oracle_suite

    rep = run_oracle_suite(args.graphs, args.grad_graphs, args.viterbi_cases, args.seed)
    sys.stdout.write(rep.to_text())
    ok = rep.ok()
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="weakseg", description="Weakly supervised temporal segmentation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--K", type=_positive_int, default=5)
    g.add_argument("--D", type=_positive_int, default=8)
    g.add_argument("--videos", type=_positive_int, default=80)
    g.add_argument("--test", type=int, default=0, help="additional test videos written to OUT/test")
    g.add_argument("--min-len", type=_positive_int, default=2)
    g.add_argument("--max-len", type=_positive_int, default=4)
    g.add_argument("--mean-length", type=float, default=15.0)
    g.add_argument("--noise", type=float, default=0.5)
    g.add_argument("--center-scale", type=float, default=1.0)
    g.add_argument("--bg-prob", type=float, default=0.0)
    g.add_argument("--templates", type=_positive_int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log", help="per-iteration log (default: checkpoint path with .log)")
    t.add_argument("--window", type=int, default=20)
    t.add_argument("--loss", choices=["F", "DF", "CDF"], default="CDF")
    t.add_argument("--alpha", type=float, default=0.1)
    t.add_argument("--iters", type=_positive_int, default=2000)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--lr-drop-at", type=int, default=None)
    t.add_argument("--lr-dropped", type=float, default=0.001)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--scorer", choices=["linear", "gru"], default="gru")
    t.add_argument("--hidden", type=_positive_int, default=64)
    t.add_argument("--max-segment-length", type=_positive_int, default=None)
    t.set_defaults(func=cmd_train)

    for name, fn, helptext in (("segment", cmd_segment, "segment videos, selecting transcripts"),
                               ("align", cmd_align, "align videos to their transcripts")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--model", required=True)
        s.add_argument("--data", required=True)
        s.add_argument("--out", required=True, help="directory for per-video label files")
        s.add_argument("--window", type=int, default=20)
        s.add_argument("--max-segment-length", type=_positive_int, default=None)
        s.add_argument("--dump-graph", metavar="DIR", help="write each video's segmentation graph table here")
        if name == "segment":
            s.add_argument("--pool", help="dataset whose transcripts form the candidate pool")
        s.set_defaults(func=fn)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--data", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--out")
    e.add_argument("--format", choices=["text", "lines"], default="text")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="draw a segmentation timeline as SVG")
    r.add_argument("--seg", required=True)
    r.add_argument("--gt")
    r.add_argument("--out", required=True)
    r.add_argument("--title")
    r.add_argument("--width", type=_positive_int, default=800)
    r.set_defaults(func=cmd_render)

    o = sub.add_parser("oracle-check", help="compare the recursions with brute force")
    o.add_argument("--graphs", type=_positive_int, default=200)
    o.add_argument("--grad-graphs", type=_positive_int, default=50)
    o.add_argument("--viterbi-cases", type=_positive_int, default=50)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"weakseg {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"weakseg {args.command}: internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
