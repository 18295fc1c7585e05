"""Operator command line: cohort generation, training, evaluation, serving."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .cohort import load_cohort, save_cohort
from .errors import SepsimError
from .synth import PlantedOptimalPolicy, SynthConfig, generate_synthetic_cohort


def _add_cohort_commands(sub):
    gen = sub.add_parser("gen", help="generate a synthetic cohort")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--adherence", type=float, default=0.90)
    gen.add_argument("--fixed-steps", type=int, default=None)
    gen.set_defaults(func=cmd_cohort_gen)


def cmd_cohort_gen(args) -> int:
    config = SynthConfig(adherence_target=args.adherence, fixed_steps=args.fixed_steps)
    cohort = generate_synthetic_cohort(args.seed, args.n, config)
    save_cohort(cohort, args.out)
    print(f"wrote {len(cohort.trajectories)} trajectories to {args.out} "
          f"(mortality {100 * cohort.mortality():.1f}%)")
    return 0


def _add_wm_commands(sub):
    train_p = sub.add_parser("train", help="train the world model")
    train_p.add_argument("--cohort", required=True)
    train_p.add_argument("--out", required=True)
    train_p.add_argument("--config", help="JSON file overriding model defaults")
    train_p.add_argument("--seed", type=int, default=0)
    train_p.add_argument("--hidden-dim", type=int)
    train_p.add_argument("--epochs", type=int)
    train_p.add_argument("--batch-size", type=int)
    train_p.add_argument("--window-k", type=int)
    train_p.set_defaults(func=cmd_wm_train)

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint on held-out data")
    eval_p.add_argument("--ckpt", required=True)
    eval_p.add_argument("--cohort", required=True)
    eval_p.add_argument("--split", default="test")
    eval_p.set_defaults(func=cmd_wm_eval)


def _model_config(args):
    from .worldmodel import ModelConfig

    overrides = {}
    if args.config:
        with open(args.config) as f:
            overrides.update(json.load(f))
    mapping = {"hidden_dim": args.hidden_dim, "max_epochs": args.epochs,
               "batch_size": args.batch_size, "window_k": args.window_k}
    overrides.update({k: v for k, v in mapping.items() if v is not None})
    return ModelConfig(**{**ModelConfig().to_dict(), **overrides})


def cmd_wm_train(args) -> int:
    from .worldmodel import init_params, save_checkpoint, train

    cohort = load_cohort(args.cohort)
    config = _model_config(args)
    params = init_params(args.seed, config, cohort.norm, cohort.disc)
    best, history = train(params, cohort, seed=args.seed, log=print)
    save_checkpoint(best, args.out)
    print(f"saved checkpoint to {args.out} "
          f"(best val loss {min(h['val_loss'] for h in history):.4f})")
    return 0


def cmd_wm_eval(args) -> int:
    from .worldmodel import evaluate_model, load_checkpoint

    params = load_checkpoint(args.ckpt)
    cohort = load_cohort(args.cohort).imputed()
    metrics = evaluate_model(params, cohort.split(args.split))
    print(f"{'Model Component':<22} {'Metric':<18} {'Value':>8}")
    print("-" * 50)
    print(f"{'State Transition':<22} {'MAE':<18} {metrics['state_mae']:>8.3f}")
    print(f"{'':<22} {'Ventilation AUC':<18} {metrics['vent_auc']:>8.3f}")
    print(f"{'Outcome Prediction':<22} {'AUC-ROC':<18} {metrics['outcome_auroc']:>8.3f}")
    print(f"{'':<22} {'AUC-PR':<18} {metrics['outcome_auprc']:>8.3f}")
    print(json.dumps(metrics, sort_keys=True))
    return 0


def _add_policy_commands(sub):
    eval_p = sub.add_parser("eval", help="off-policy evaluation of a policy")
    eval_p.add_argument("--ckpt", help="world-model checkpoint (needed by "
                                       "simulation-driven policies)")
    eval_p.add_argument("--cohort", required=True)
    eval_p.add_argument("--policy", required=True,
                        help="clinician|random|guideline|greedy|optimal|behavior")
    eval_p.add_argument("--split", default="test")
    eval_p.add_argument("--seed", type=int, default=0)
    eval_p.add_argument("--gamma", type=float, default=0.99)
    eval_p.add_argument("--json", action="store_true", dest="as_json")
    eval_p.set_defaults(func=cmd_policy_eval)


def make_policy(name: str, cohort, world, seed: int):
    from .agent import BUILTIN_POLICIES
    from .ope import BehaviorAsPolicy, fit_behavior
    from .ope.clinical import LoggedReplayPolicy

    if name.startswith(("http://", "https://")):
        from .adapter import external_agent_adapter
        return external_agent_adapter(name)
    if name == "clinician":
        return LoggedReplayPolicy()
    if name == "optimal":
        return PlantedOptimalPolicy()
    if name == "behavior":
        return BehaviorAsPolicy(fit_behavior(cohort, seed=seed), cohort.norm)
    if name in BUILTIN_POLICIES:
        return BUILTIN_POLICIES[name](seed)
    raise SepsimError(f"unknown policy {name!r}")


def cmd_policy_eval(args) -> int:
    from .ope import OpeConfig, evaluate_policy, render_report_table

    cohort = load_cohort(args.cohort)
    world = None
    if args.ckpt:
        from .worldmodel import load_checkpoint
        world = load_checkpoint(args.ckpt)
    policy = make_policy(args.policy, cohort, world, args.seed)
    report = evaluate_policy(cohort, policy, world=world, split=args.split,
                             ope_config=OpeConfig(gamma=args.gamma), seed=args.seed)
    if args.as_json:
        print(report.to_json())
    else:
        print(render_report_table([report]))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    from .worldmodel import load_checkpoint

    ckpt = args.ckpt or os.environ.get("SEPSIM_CKPT")
    if not ckpt:
        raise SepsimError("provide --ckpt or set SEPSIM_CKPT")
    world = load_checkpoint(ckpt)
    cohort = load_cohort(args.cohort) if args.cohort else None
    addr = args.addr or os.environ.get("SEPSIM_ADDR", "127.0.0.1:8000")
    host, _, port = addr.partition(":")
    ttl = float(os.environ.get("SEPSIM_TTL_SECONDS", 30 * 60))
    app = create_app(world, cohort, ttl_seconds=ttl)
    uvicorn.run(app, host=host, port=int(port or 8000))
    return 0


def cmd_gradcheck(args) -> int:
    from .worldmodel import ModelConfig, check_gradients, init_params
    from .worldmodel.loss import build_batch, prepare_trajectory, transition_samples

    config = ModelConfig(hidden_dim=args.hidden_dim, static_embed_dim=8,
                         action_embed_dim=8, vent_hidden_dim=16,
                         outcome_hidden_dim=16, window_k=4, dropout=0.0,
                         batch_size=args.batch)
    cohort = generate_synthetic_cohort(args.seed, 8).imputed()
    params = init_params(args.seed, config, cohort.norm, cohort.disc)
    rng = np.random.default_rng(args.seed + 1)
    for k in ("vent.w2", "vent.b2", "out.w2", "out.b2", "gauss.W_sig"):
        params.arrays[k] += rng.normal(0, 0.3, params.arrays[k].shape)
    tensors = [prepare_trajectory(t, params) for t in cohort.trajectories]
    batch = build_batch(tensors, transition_samples(tensors)[:args.batch],
                        config.window_k)
    report = check_gradients(params, batch, eps=args.eps)
    print(f"checked {report.n_params} parameters")
    print(f"max relative error: {report.max_rel_err:.3e} (worst: {report.worst_param})")
    ok = report.ok(args.tol)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sepsim")
    top = parser.add_subparsers(dest="command", required=True)

    cohort_p = top.add_parser("cohort", help="cohort operations")
    _add_cohort_commands(cohort_p.add_subparsers(dest="subcommand", required=True))

    wm_p = top.add_parser("wm", help="world-model operations")
    _add_wm_commands(wm_p.add_subparsers(dest="subcommand", required=True))

    policy_p = top.add_parser("policy", help="policy evaluation")
    _add_policy_commands(policy_p.add_subparsers(dest="subcommand", required=True))

    serve_p = top.add_parser("serve", help="run the HTTP session service")
    serve_p.add_argument("--ckpt")
    serve_p.add_argument("--cohort")
    serve_p.add_argument("--addr")
    serve_p.set_defaults(func=cmd_serve)

    grad_p = top.add_parser("gradcheck", help="finite-difference gradient check")
    grad_p.add_argument("--hidden-dim", type=int, default=16)
    grad_p.add_argument("--batch", type=int, default=8)
    grad_p.add_argument("--eps", type=float, default=1e-5)
    grad_p.add_argument("--tol", type=float, default=1e-4)
    grad_p.add_argument("--seed", type=int, default=0)
    grad_p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SepsimError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
