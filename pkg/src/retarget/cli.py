"""Command-line entry point: train, retarget, multiop, bdw, bench."""
import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import agent, imagecore, multiop, neural
from .bdw import Scorer, bdw
from .operators import Action, StepSchedule

log = logging.getLogger("retarget")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _ratio_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from None


def build_parser():
    p = _Parser(prog="retarget", description="Multi-operator image retargeting.")
    p.add_argument("--config", help="file of 'key = value' lines overriding option defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="self-play training")
    t.add_argument("--dataset", required=True, help="image directory or manifest file")
    t.add_argument("--episodes", type=int, default=10_000)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--gamma", type=float, default=0.99)
    t.add_argument("--beta", type=float, default=0.01)
    t.add_argument("--lr", type=float, default=7e-4)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--metrics", help="JSON-lines log (default: <out>.metrics.jsonl)")
    t.add_argument("--no-self-play", dest="self_play", action="store_false")
    t.add_argument("--no-freq-weight", dest="freq_weight", action="store_false")
    t.add_argument("--strict-eq4-min", action="store_true",
                   help="literal min over all counter entries in the loss weights")
    t.add_argument("--reward", default="bdw", help="bdw | external:<cmd>")
    t.add_argument("--net", choices=sorted(neural.PRESETS), default="desk")
    t.add_argument("--working-width", type=int, default=240)

    r = sub.add_parser("retarget", help="sequential inference with a trained agent")
    r.add_argument("--input", required=True)
    r.add_argument("--ratio", type=float, required=True)
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--output", required=True)
    r.add_argument("--trace", help="write the action sequence as JSON")
    r.add_argument("--sample", action="store_true", help="sample actions instead of argmax")
    r.add_argument("--seed", type=int)

    m = sub.add_parser("multiop", help="dynamic-programming baseline")
    m.add_argument("--input", required=True)
    m.add_argument("--ratio", type=float, required=True)
    m.add_argument("--output", required=True)
    m.add_argument("--report", required=True)
    m.add_argument("--reward", default="bdw")

    d = sub.add_parser("bdw", help="print the BDW distance between two images")
    d.add_argument("--a", required=True)
    d.add_argument("--b", required=True)

    b = sub.add_parser("bench", help="DP baseline vs sequential agent")
    b.add_argument("--input", required=True)
    b.add_argument("--ratios", type=_ratio_list, default=[0.75, 0.5])
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--report", required=True)
    b.add_argument("--reward", default="bdw")
    return p


def read_config(path):
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv, values):
    """Turn config entries into parser defaults so explicit flags still win."""
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices.get(args.command)
    if sub is None:
        raise CliError("a subcommand is required")
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None:
            raise CliError(f"unknown config key {key!r} for '{args.command}'")
        if act.nargs == 0:
            truthy = raw.lower() in ("1", "true", "yes", "on")
            # store_false flags keep their positive dest name in the file
            defaults[key] = truthy
        elif act.type is not None:
            try:
                defaults[key] = act.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise CliError(f"config key {key!r}: {exc}") from None
        else:
            defaults[key] = raw
    sub.set_defaults(**defaults)
    for act in sub._actions:
        if act.dest in defaults and act.required:
            act.required = False
    return parser.parse_args(argv)


def _seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("RETARGET_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"RETARGET_SEED must be an integer, got {env!r}") from None
    return 0


def cmd_train(args):
    cfg = agent.TrainConfig(
        batch=args.batch, gamma=args.gamma, beta=args.beta, lr=args.lr,
        episodes=args.episodes, self_play=args.self_play, freq_weight=args.freq_weight,
        strict_eq4_min=args.strict_eq4_min, seed=_seed(args), net=args.net,
        working_width=args.working_width)
    scorer = Scorer.parse(args.reward)
    paths = agent.load_dataset(args.dataset)
    metrics = args.metrics or f"{args.out}.metrics.jsonl"
    net, opt, records = agent.train(cfg, paths, metrics_path=metrics, scorer=scorer)
    neural.save_checkpoint(args.out, net, opt, meta={"train": agent.config_dict(cfg),
                                                     "reward": args.reward})
    last = records[-1]
    print(f"trained {cfg.n_batches} batches; last mean_reward={last['mean_reward']:.3f}; "
          f"checkpoint {args.out}")


def cmd_retarget(args):
    net, _, _ = neural.load_checkpoint(args.checkpoint)
    img = imagecore.load_image(args.input)
    out, actions = agent.infer(net, img, args.ratio, sample=args.sample,
                               rng=agent.np.random.default_rng(_seed(args)))
    imagecore.save_image(out, args.output)
    if args.trace:
        sched = StepSchedule(img.shape[1])
        trace = {
            "input": str(args.input),
            "ratio": args.ratio,
            "i_max": len(actions),
            "original_width": img.shape[1],
            "actions": [Action(a).name for a in actions],
            "action_codes": actions,
            "widths": list(sched.targets[:len(actions)]),
        }
        Path(args.trace).write_text(json.dumps(trace, indent=2) + "\n")
    print(f"{img.shape[1]}x{img.shape[0]} -> {out.shape[1]}x{out.shape[0]}: "
          + " ".join(Action(a).name for a in actions))


def cmd_multiop(args):
    img = imagecore.load_image(args.input)
    i_max = agent.ratio_to_steps(args.ratio)
    report = multiop.multiop_search(img, i_max, StepSchedule(img.shape[1]),
                                    Scorer.parse(args.reward))
    imagecore.save_image(report.best_image, args.output)
    Path(args.report).write_text(report.to_json() + "\n")
    print(f"best {report.best_score:.6g} via {' '.join(Action(a).name for a in report.best_sequence)}"
          f" ({report.images_generated} images)")


def cmd_bdw(args):
    a = imagecore.load_image(args.a)
    b = imagecore.load_image(args.b)
    print(f"{bdw(a, b):.10g}")


def cmd_bench(args):
    net, _, _ = neural.load_checkpoint(args.checkpoint)
    img = imagecore.load_image(args.input)
    scorer = Scorer.parse(args.reward)
    sched = StepSchedule(img.shape[1])
    rows = []
    for ratio in args.ratios:
        i_max = agent.ratio_to_steps(ratio)
        t0 = time.perf_counter()
        _, actions = agent.infer(net, img, ratio)
        seq_time = time.perf_counter() - t0
        rep = multiop.multiop_search(img, i_max, sched, scorer)
        rows.append({
            "ratio": ratio,
            "i_max": i_max,
            "sequential": {"images_generated": len(actions), "scorer_calls": 0,
                           "wall_time_s": seq_time,
                           "sequence": [Action(a).name for a in actions]},
            "multiop": rep.to_dict(),
            "closed_form_dp_images": multiop.dp_transition_count(i_max),
            "images_ratio": rep.images_generated / len(actions),
            "wall_time_ratio": rep.wall_time / seq_time if seq_time > 0 else None,
        })
        log.info("ratio %.3f: DP %d images %.2fs, sequential %d images %.3fs",
                 ratio, rep.images_generated, rep.wall_time, len(actions), seq_time)
    report = {"input": str(args.input), "width": img.shape[1], "height": img.shape[0],
              "runs": rows}
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for r in rows:
        print(f"ratio {r['ratio']}: images DP/sequential = {r['images_ratio']:.1f}, "
              f"wall-clock ratio = {r['wall_time_ratio']:.1f}")


COMMANDS = {
    "train": cmd_train,
    "retarget": cmd_retarget,
    "multiop": cmd_multiop,
    "bdw": cmd_bdw,
    "bench": cmd_bench,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            args = _apply_config(parser, argv, read_config(known.config))
        else:
            args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("a subcommand is required (train, retarget, multiop, bdw, bench)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return exc.code or 0
    except Exception as exc:
        print(f"retarget: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
