"""Single entry point wiring every stage: graph build, embedding pretraining,
synthetic-corpus generation, policy training, evaluation, prompt generation.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
Environment overrides: KGHOP_ENDPOINT (remote encoder URL), KGHOP_RUN_DIR.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import beam, fte, ppo, synth, transe
from .agent import AgentDims, load_checkpoint
from .config import echo_config, load_config
from .data import parse_dataset, write_skip_report
from .encoders import ENCODER_HASH, ENCODER_REMOTE, EncoderSpec, make_encoder
from .env import Environment
from .errors import ConfigError, DataError, KghopError
from .graph import GraphConfig, KnowledgeGraph, load_graph

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _add_common(parser):
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")


def _build_parser():
    parser = argparse.ArgumentParser(prog="kghop", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph-build", help="load a TSV triple file and serialize the graph")
    p.add_argument("--triples", required=True, help="TSV file: head<TAB>relation<TAB>tail")
    p.add_argument("--out", required=True, help="output graph file")
    p.add_argument("--add-unk", action="store_true", help="reserve an <UNK> entity")
    _add_common(p)

    p = sub.add_parser("transe", help="pretrain entity/relation embeddings")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=200)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--negatives", type=int, default=1)
    p.add_argument("--norm", type=int, choices=(1, 2), default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random-init", action="store_true",
                   help="skip training; emit seeded Gaussian(0, 0.02) tables")
    _add_common(p)

    p = sub.add_parser("synth", help="generate the synthetic benchmark corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--entities", type=int, default=100)
    p.add_argument("--branching", type=int, default=4)
    p.add_argument("--relations", type=int, default=6)
    p.add_argument("--goals", type=int, default=12,
                   help="size of the goal vocabulary (0 = any entity)")
    p.add_argument("--train", type=int, default=400)
    p.add_argument("--valid", type=int, default=100)
    p.add_argument("--test", type=int, default=0)
    p.add_argument("--two-hop-frac", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("train", help="PPO training")
    p.add_argument("--config", help="YAML run config (defaults used when omitted)")
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--data", required=True, help="directory with train.jsonl and valid.jsonl")
    p.add_argument("--encoder", choices=(ENCODER_HASH, ENCODER_REMOTE), default=None)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--run-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--max-env-steps", type=int, default=None)
    p.add_argument("--stop-target", type=float, default=None,
                   help="stop once greedy validation target@1 reaches this value")
    _add_common(p)

    p = sub.add_parser("eval", help="beam-search evaluation of a checkpoint")
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="JSONL sample file")
    p.add_argument("--encoder", choices=(ENCODER_HASH, ENCODER_REMOTE), default=None)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--ks", default=None, help="comma-separated recall cutoffs")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="evaluation shuffle seed")
    p.add_argument("--out", default=None, help="write the report as JSON")
    p.add_argument("--traces", default=None, help="write per-sample decode traces (JSONL)")
    _add_common(p)

    p = sub.add_parser("promptgen", help="render prompts for a dataset split")
    p.add_argument("--graph", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scheme", choices=(fte.SCHEME_STANDARD, fte.SCHEME_NORMAL,
                                        fte.SCHEME_OUT_PATH_AWARE), required=True)
    p.add_argument("--out", required=True, help="output JSONL of {sample_id, scheme, prompt}")
    p.add_argument("--max-out", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    return parser


def _make_encoder_from_args(cfg, args):
    spec = cfg.encoder
    if args.encoder:
        spec.kind = args.encoder
    endpoint = args.endpoint or os.environ.get("KGHOP_ENDPOINT")
    if endpoint:
        spec.endpoint = endpoint
    if spec.kind == ENCODER_REMOTE and not spec.endpoint:
        raise ConfigError("remote encoder needs --endpoint or KGHOP_ENDPOINT")
    return make_encoder(spec)


def _run_dir_from_args(cfg, args):
    return args.run_dir or os.environ.get("KGHOP_RUN_DIR") or cfg.run_dir


def cmd_graph_build(args):
    graph = load_graph(args.triples, GraphConfig(add_unk=args.add_unk))
    graph.save(args.out)
    print(graph.stats.summary())
    return EXIT_OK


def cmd_transe(args):
    graph = KnowledgeGraph.load(args.graph)
    cfg = transe.TransEConfig(dim_entity=args.dim, dim_relation=args.dim,
                              margin=args.margin, learning_rate=args.lr,
                              epochs=args.epochs, negatives_per_positive=args.negatives,
                              norm_order=args.norm, seed=args.seed,
                              random_init=args.random_init)
    table = transe.train(graph, cfg)
    transe.save_embeddings(table, args.out)
    last_loss = table.training_losses[-1] if table.training_losses else float("nan")
    print(f"embeddings: entities={graph.entity_count} relations={graph.relation_count} "
          f"dim={cfg.dim_entity} final_loss={last_loss:.5f}")
    return EXIT_OK


def cmd_synth(args):
    cfg = synth.SynthConfig(n_entities=args.entities, branching=args.branching,
                            n_relations=args.relations, n_goals=args.goals,
                            n_train=args.train, n_valid=args.valid, n_test=args.test,
                            two_hop_fraction=args.two_hop_frac, seed=args.seed)
    graph, stats = synth.generate(cfg, args.out)
    graph.save(os.path.join(args.out, "graph.bin"))
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def _load_stack(args, cfg):
    graph = KnowledgeGraph.load(args.graph)
    table = transe.load_embeddings(args.embeddings, graph)
    env_cfg = cfg.env
    env = Environment(graph, max_out=env_cfg.max_out, max_steps=env_cfg.max_steps,
                      positive_reward=env_cfg.positive_reward,
                      negative_reward=env_cfg.negative_reward,
                      equal_min_step=env_cfg.equal_min_step,
                      step_penalty=env_cfg.step_penalty)
    return graph, table, env


def cmd_train(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.max_iterations is not None:
        cfg.ppo.max_iterations = args.max_iterations
    if args.max_env_steps is not None:
        cfg.ppo.max_env_steps = args.max_env_steps
    if args.stop_target is not None:
        cfg.ppo.stop_at_valid_target = args.stop_target
    graph, table, env = _load_stack(args, cfg)
    encoder = _make_encoder_from_args(cfg, args)

    train_samples, train_skips = parse_dataset(os.path.join(args.data, "train.jsonl"), graph)
    valid_samples, valid_skips = parse_dataset(os.path.join(args.data, "valid.jsonl"), graph)
    if not train_samples or not valid_samples:
        raise DataError("empty train or valid split after resolution")

    run_dir = _run_dir_from_args(cfg, args)
    cfg.run_dir = run_dir
    os.makedirs(run_dir, exist_ok=True)
    echo_config(cfg, run_dir)
    write_skip_report(train_skips + valid_skips, os.path.join(run_dir, "skips.jsonl"))

    dims = AgentDims(d_s=cfg.encoder.dim, h1=cfg.agent.h1, h2=cfg.agent.h2,
                     d_action=table.dim_relation + table.dim_entity)
    with open(os.path.join(run_dir, "train_log.jsonl"), "w", encoding="utf-8") as log_stream:
        result = ppo.train_loop(cfg.ppo, env, table, encoder, train_samples, valid_samples,
                                dims=dims, seed=cfg.seed, dtype=cfg.agent.numpy_dtype(),
                                eval_seed=cfg.eval.seed, run_dir=run_dir,
                                log_stream=log_stream)
    print(f"stopped: {result.stop_reason} env_steps={result.env_steps} "
          f"best_valid_target@1={result.best_metric:.4f}")
    print(f"checkpoints: {run_dir}/best.ckpt {run_dir}/last.ckpt")
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args.config)
    if args.ks:
        cfg.eval.ks = tuple(int(k) for k in args.ks.split(","))
    if args.width is not None:
        cfg.eval.width = args.width
    if args.seed is not None:
        cfg.eval.seed = args.seed
    graph, table, env = _load_stack(args, cfg)
    encoder = _make_encoder_from_args(cfg, args)
    policy, meta = load_checkpoint(args.checkpoint, table, dtype=cfg.agent.numpy_dtype())
    samples, skips = parse_dataset(args.data, graph)
    if not samples:
        raise DataError("no usable samples after resolution")
    width = cfg.eval.width or max(cfg.eval.ks)
    trace_stream = open(args.traces, "w", encoding="utf-8") if args.traces else None
    try:
        report = beam.evaluate(policy, encoder, env, samples, ks=cfg.eval.ks,
                               width=width, seed=cfg.eval.seed, trace_stream=trace_stream)
    finally:
        if trace_stream:
            trace_stream.close()
    print(report.format_table())
    if skips:
        print(f"skipped {len(skips)} unusable samples")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_promptgen(args):
    graph = KnowledgeGraph.load(args.graph)
    env = Environment(graph, max_out=args.max_out)
    samples, _skips = parse_dataset(args.data, graph)
    scheme = fte.default_scheme(args.scheme)
    with open(args.out, "w", encoding="utf-8") as fh:
        for sample in samples:
            state = env.reset(sample)
            prompt = fte.render_prompt(scheme, state, graph,
                                       max_out=args.max_out, seed=args.seed)
            fh.write(json.dumps({"sample_id": sample.sample_id,
                                 "scheme": args.scheme,
                                 "prompt": prompt}, ensure_ascii=False) + "\n")
    print(f"wrote {len(samples)} prompts to {args.out}")
    return EXIT_OK


COMMANDS = {
    "graph-build": cmd_graph_build,
    "transe": cmd_transe,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "promptgen": cmd_promptgen,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except KghopError as exc:
        logger.error("runtime error: %s", exc)
        return EXIT_RUNTIME
    except OSError as exc:
        logger.error("i/o error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
