"""Command-line pipeline: synth, pretrain-loc, train, index, query, eval, baseline.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .baselines import Bm25Ranker, GeoDistRanker, SortByDistanceRanker, bm25_build
from .config import RunConfig, load_config
from .contrastive import train
from .corpus import CorpusError, PoiCollection, load_pois, load_questions, save_pois, save_questions
from .encoders import BiEncoder, LocationVocab, encode_question
from .errors import ConfigError, FormatError
from .evaluation import IndexRanker, evaluate, write_report
from .geo_pretrain import pretrain_location_module
from .index import CandidateFilter, build_index, load_index, save_index, search
from .nn import load_checkpoint, save_checkpoint
from .synthetic import SynthSpec, generate_synthetic_corpus

log = logging.getLogger("poiretriever")


class ValidationFailure(Exception):
    pass


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = dataclasses.replace(
            cfg, seed=seed,
            model=dataclasses.replace(cfg.model, seed=seed),
            train=dataclasses.replace(cfg.train, seed=seed),
            geo_pretrain=dataclasses.replace(cfg.geo_pretrain, seed=seed),
        )
    if getattr(args, "threads", None):
        cfg = dataclasses.replace(cfg, threads=args.threads)
    log.info("resolved config seed=%d %s", cfg.seed,
             json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")))
    return cfg


def _data(args):
    data = Path(args.data)
    pois = load_pois(data / "pois.jsonl")
    qpath = Path(args.questions) if getattr(args, "questions", None) else data / "questions.jsonl"
    questions = load_questions(qpath, pois) if qpath.exists() else []
    return pois, questions


def _fresh_model(cfg: RunConfig, pois: PoiCollection, loc_kind: str | None = None) -> BiEncoder:
    mcfg = cfg.model if loc_kind is None else dataclasses.replace(cfg.model, loc_kind=loc_kind)
    return BiEncoder(mcfg, LocationVocab.build(pois.pois))


def cmd_synth(args) -> int:
    spec = SynthSpec(n_cities=args.cities, pois_per_city=args.pois_per_city,
                     questions_per_city=args.questions)
    if args.cities < 1 or args.pois_per_city < 1 or args.questions < 0:
        print("error: --cities and --pois-per-city must be >= 1", file=sys.stderr)
        return 2
    log.info("synth seed=%d spec=%s", args.seed, spec)
    pois, questions = generate_synthetic_corpus(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_pois(pois, out / "pois.jsonl")
    save_questions(questions, out / "questions.jsonl")
    print(f"wrote {len(pois)} POIs and {len(questions)} questions to {out}")
    return 0


def cmd_pretrain_loc(args) -> int:
    cfg = _resolve_config(args)
    pois, _ = _data(args)
    model = _fresh_model(cfg, pois, "name")
    _, trace = pretrain_location_module(model.loc, pois.pois, cfg.geo_pretrain)
    save_checkpoint(args.model, model.location_parameters(), model.header_config(), cfg.seed)
    csv_path = Path(args.loss_csv or f"{args.model}.loss.csv")
    csv_path.write_text("epoch,mean_loss\n" + "".join(
        f"{i + 1},{v:.6f}\n" for i, v in enumerate(trace)), encoding="utf-8")
    print(f"location module -> {args.model}; losses -> {csv_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    pois, questions = _data(args)
    if not questions:
        raise ValidationFailure("no training questions found")
    if args.init:
        header, tensors = load_checkpoint(args.init)
        vocab = LocationVocab.from_dict(header["config"]["vocab"])
        model = BiEncoder(cfg.model, vocab)
        model.load_tensors(tensors, strict=False)
    else:
        model = _fresh_model(cfg, pois)
    result = train(model, pois, questions, cfg.train, cfg.digest)
    model.save(args.model)
    trace_path = Path(args.trace or f"{args.model}.trace.csv")
    result.write_trace(trace_path)
    print(f"model -> {args.model}; trace -> {trace_path}")
    return 0


def cmd_index(args) -> int:
    cfg = _resolve_config(args)
    pois, _ = _data(args)
    model = BiEncoder.load(args.model)
    index = build_index(model, pois.pois, cfg.digest)
    save_index(index, args.index)
    print(f"indexed {len(index)} POIs (dim {index.dim}) -> {args.index}")
    return 0


def cmd_query(args) -> int:
    cfg = _resolve_config(args)
    from .corpus import Question

    model = BiEncoder.load(args.model)
    index = load_index(args.index)
    if not args.question.strip():
        raise ValidationFailure("empty question")
    vec = encode_question(model, Question("cli", args.question, args.city or "", ("_",)))
    flt = CandidateFilter(city=args.city, poi_type=args.type)
    for r in search(index, vec, args.k, flt, cfg.threads):
        print(f"{r.rank}\t{r.poi_id}\t{r.score:.6f}")
    return 0


def _write_reports(reports, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(reports, out_dir / f"{stem}.csv", out_dir / f"{stem}.json")
    for r in reports:
        for name, value in r.rows():
            print(f"{name}\t{value:.4f}")


def _modes(args):
    return ["local", "global"] if args.mode == "both" else [args.mode]


def _ns(cfg, mode):
    return cfg.eval.local_ns if mode == "local" else cfg.eval.global_ns


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    pois, questions = _data(args)
    if not questions:
        raise ValidationFailure("no evaluation questions found")
    model = BiEncoder.load(args.model)
    index = load_index(args.index)
    ranker = IndexRanker(model, index, cfg.threads)
    reports = [evaluate(ranker, questions, pois, m, _ns(cfg, m), filter_type=cfg.eval.filter_type)
               for m in _modes(args)]
    _write_reports(reports, Path(args.out), "report")
    return 0


def cmd_baseline(args) -> int:
    cfg = _resolve_config(args)
    pois, questions = _data(args)
    if not questions:
        raise ValidationFailure("no evaluation questions found")
    if args.name == "sd":
        ranker = SortByDistanceRanker(pois)
    elif args.name == "bm25":
        ranker = Bm25Ranker(bm25_build(pois.pois))
    else:
        train_q = questions
        if args.train_questions:
            train_q = load_questions(args.train_questions, pois)
        if args.name == "geo-loc":
            mcfg = dataclasses.replace(cfg.model, loc_kind="coords", geo_m=cfg.baseline.m,
                                       geo_dropout=cfg.baseline.dropout)
            model = BiEncoder(mcfg, LocationVocab.build(pois.pois))
        else:
            model = _fresh_model(cfg, pois, "none")
        train(model, pois, train_q, cfg.train, cfg.digest, track_accuracy=False)
        index = build_index(model, pois.pois, cfg.digest)
        ranker = (IndexRanker(model, index, cfg.threads) if args.name == "geo-loc"
                  else GeoDistRanker(model, index, pois, cfg.baseline.lam))
    reports = [evaluate(ranker, questions, pois, m, _ns(cfg, m)) for m in _modes(args)]
    _write_reports(reports, Path(args.out), f"baseline_{args.name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poiretriever", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic POI/question corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--cities", type=int, default=5)
    s.add_argument("--pois-per-city", type=int, default=40)
    s.add_argument("--questions", type=int, default=20, help="questions per city")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    def common(sp, data=True):
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        if data:
            sp.add_argument("--data", required=True)
            sp.add_argument("--questions")

    s = sub.add_parser("pretrain-loc", help="pretrain the location module with triplet loss")
    common(s)
    s.add_argument("--model", required=True, help="output location-module checkpoint")
    s.add_argument("--loss-csv")
    s.set_defaults(func=cmd_pretrain_loc)

    s = sub.add_parser("train", help="two-phase contrastive training")
    common(s)
    s.add_argument("--model", required=True, help="output checkpoint")
    s.add_argument("--init", help="pretrained location-module checkpoint")
    s.add_argument("--trace")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("index", help="encode all POIs into an index file")
    common(s)
    s.add_argument("--model", required=True)
    s.add_argument("--index", required=True)
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("query", help="rank POIs for one question")
    common(s, data=False)
    s.add_argument("--model", required=True)
    s.add_argument("--index", required=True)
    s.add_argument("--question", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--city")
    s.add_argument("--type", choices=("restaurant", "attraction", "hotel"))
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("eval", help="local/global Acc@N and MRR")
    common(s)
    s.add_argument("--model", required=True)
    s.add_argument("--index", required=True)
    s.add_argument("--mode", choices=("local", "global", "both"), default="both")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("baseline", help="evaluate a reference ranker")
    common(s)
    s.add_argument("--name", choices=("sd", "bm25", "geo-loc", "geo-dist"), required=True)
    s.add_argument("--mode", choices=("local", "global", "both"), default="both")
    s.add_argument("--train-questions", help="training questions for geo-loc/geo-dist")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.setLevel(logging.INFO)
    for h in list(log.handlers):
        log.removeHandler(h)
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(h)
    log.propagate = False
    log.info("kernel backend: %s", kernels.BACKEND)
    try:
        return args.func(args)
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationFailure, ConfigError, CorpusError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
