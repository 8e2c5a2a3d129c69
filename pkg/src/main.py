#!/usr/bin/env python3
"""
Point d'entrée principal : génération de données, entraînement, décodage et évaluation.

Codes de sortie : 0 en cas de succès, 1 pour une erreur d'utilisation, 2 pour un
échec à l'exécution.
"""

import argparse
import json
import sys
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

# Ajouter le répertoire parent au path pour permettre les imports absolus
sys.path.append(str(Path(__file__).resolve().parent.parent))

from colorama import Fore, Style, init as colorama_init

from src.data.answers import AnswerVocab, relabel
from src.data.dataset import generate_dataset, metadata_path, read_dataset, read_metadata, write_dataset, write_metadata
from src.data.grammar import default_grammar, load_grammar, split_grammar
from src.data.scene import SceneExample, grammar_vocab
from src.data.vocab import Vocab, detokenize
from src.evaluation.gradcheck_suite import TOLERANCE, run_gradcheck_suite
from src.evaluation.report import decode_scenes, evaluate_captions, evaluate_vqa, merge_curves, write_curves
from src.inference.vqa import vqa_predict
from src.model.settings import make_model_config
from src.training.checkpoint import Checkpoint, load_checkpoint
from src.training.settings import TrainConfig, make_train_config
from src.training.trainer import TrainResult, finetune_caption, finetune_vqa, pretrain
from src.training.trainlog import TrainLog
from src.utils.errors import ConfigError, UVLPError, UsageError
from src.utils.io import atomic_open
from src.utils.logger import get_logger, setup_logger
import config

logger = get_logger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
SCENE_SEED_STRIDE = 1_000_003


class CliParser(argparse.ArgumentParser):
    """Analyseur dont les erreurs remontent en UsageError au lieu de quitter."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# Construction de l'analyseur


def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    defaults = config.MODEL_DEFAULTS
    group = parser.add_argument_group("modèle")
    group.add_argument("--layers", type=int, default=defaults["layers"], help="Nombre de couches")
    group.add_argument("--d", type=int, default=defaults["d"], help="Largeur cachée")
    group.add_argument("--heads", type=int, default=defaults["heads"], help="Têtes d'attention")
    group.add_argument("--ffn", type=int, default=defaults["ffn"], help="Largeur de la couche feed-forward")
    group.add_argument("--T", type=int, default=defaults["T"], help="Longueur maximale des légendes")
    group.add_argument("--dropout", type=float, default=defaults["dropout"])
    group.add_argument("--region-positional", choices=["none", "global"], default=defaults["region_positional"])
    group.add_argument("--no-visual-sep", dest="visual_sees_sep", action="store_false",
                       help="Les régions ne voient pas le [SEP] en mode seq2seq")
    group.add_argument("--region-pretext", action="store_true",
                       help="Tâche prétexte de classification des régions")
    group.add_argument("--no-class-probs", dest="class_probs_as_input", action="store_false",
                       help="Ne pas injecter les probabilités de classe dans l'embedding des régions")


def _add_train_arguments(parser: argparse.ArgumentParser, lam: Optional[float]) -> None:
    defaults = config.TRAIN_DEFAULTS
    parser.add_argument("--data", required=True, help="Jeu de données JSONL")
    parser.add_argument("--val-data", help="Jeu de validation JSONL")
    parser.add_argument("--out", required=True, help="Point de contrôle de sortie")
    parser.add_argument("--steps", type=int, default=defaults["steps"])
    if lam is not None:
        parser.add_argument("--lambda", dest="lam", type=float, default=lam,
                            help="Proportion de lots seq2seq (1 : seq2seq seul, 0 : bidirectionnel seul)")
    parser.add_argument("--batch-size", type=int, default=defaults["batch_size"])
    parser.add_argument("--lr", type=float, default=defaults["lr"])
    parser.add_argument("--warmup", type=int, default=defaults["warmup"])
    parser.add_argument("--clip-norm", type=float, default=defaults["clip_norm"])
    parser.add_argument("--mask-rate", type=float, default=config.MASKING["rate"])
    parser.add_argument("--strict-bert-masking", action="store_true",
                        help="Tirage strictement indépendant (une phrase peut rester sans masque)")
    parser.add_argument("--checkpoint-every", type=int, default=defaults["checkpoint_every"])
    parser.add_argument("--eval-every", type=int, default=defaults["eval_every"])
    parser.add_argument("--log-every", type=int, default=defaults["log_every"])
    parser.add_argument("--log", help="Journal d'entraînement CSV")
    parser.add_argument("--no-wallclock", action="store_true",
                        help="Omettre la colonne de temps du journal (comparaison octet à octet)")
    parser.add_argument("--seed", type=int, default=0)


def _add_decode_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ckpt", required=True, help="Point de contrôle")
    parser.add_argument("--data", required=True, help="Jeu de données JSONL")
    parser.add_argument("--out", help="Fichier de sortie (JSONL) ; sortie standard sinon")
    parser.add_argument("--threads", type=int, default=config.THREADS)


def build_parser() -> CliParser:
    """Construit l'analyseur de la ligne de commande avec ses sous-commandes."""
    parser = CliParser(prog="uvlp", description="Pré-entraînement vision-langage unifié à l'échelle du bureau")
    parser.add_argument("--config", help="Fichier JSON de configuration (une clé par option)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Affiche les messages de debug")
    parser.add_argument("--progress", action="store_true", help="Barres de progression")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMANDE")

    p = sub.add_parser("gen-data", help="Génère un jeu de scènes synthétiques")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--grammar", help="Grammaire JSON (grammaire par défaut sinon)")
    p.add_argument("--split", choices=["all", "pretrain", "downstream"], default="all",
                   help="Sous-ensemble des templates de légendes")
    p.add_argument("--N", type=int, default=config.MODEL_DEFAULTS["N"])
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--d-in", type=int, default=config.MODEL_DEFAULTS["d_in"])
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("pretrain", help="Pré-entraînement alterné seq2seq / bidirectionnel")
    _add_train_arguments(p, config.LAMBDAS["pretrain"])
    _add_model_arguments(p)
    p.set_defaults(handler=cmd_pretrain)

    p = sub.add_parser("finetune-caption", help="Fine-tuning pour la génération de légendes")
    p.add_argument("--init", help="Point de contrôle pré-entraîné (poids frais sinon)")
    _add_train_arguments(p, None)
    _add_model_arguments(p)
    p.set_defaults(handler=cmd_finetune_caption)

    p = sub.add_parser("finetune-vqa", help="Fine-tuning pour les questions-réponses")
    p.add_argument("--init", help="Point de contrôle pré-entraîné (poids frais sinon)")
    p.add_argument("--answers", type=int, default=config.MODEL_DEFAULTS["n_answers"],
                   help="Nombre de réponses retenues")
    _add_train_arguments(p, None)
    _add_model_arguments(p)
    p.set_defaults(handler=cmd_finetune_vqa)

    p = sub.add_parser("caption", help="Génère les légendes d'un jeu de scènes")
    _add_decode_arguments(p)
    p.add_argument("--beam", type=int, default=config.DECODING["beam"])
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--max-len", type=int)
    p.add_argument("--length-alpha", type=float, default=config.DECODING["length_alpha"])
    p.set_defaults(handler=cmd_caption)

    p = sub.add_parser("vqa", help="Répond aux questions d'un jeu de scènes")
    _add_decode_arguments(p)
    p.add_argument("--topk", type=int, default=config.DECODING["topk"])
    p.set_defaults(handler=cmd_vqa)

    p = sub.add_parser("eval", help="Évalue un point de contrôle (rapport JSON + CSV)")
    p.add_argument("--task", choices=["caption", "vqa"], required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["val", "test"], default="test",
                   help="val : recherche gloutonne ; test : faisceau de taille 5")
    p.add_argument("--beam", type=int, help="Remplace la taille de faisceau implicite")
    p.add_argument("--max-len", type=int)
    p.add_argument("--length-alpha", type=float, default=config.DECODING["length_alpha"])
    p.add_argument("--out", required=True, help="Rapport JSON ; le CSV est écrit à côté")
    p.add_argument("--threads", type=int, default=config.THREADS)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("grad-check", help="Vérifie les gradients par différences finies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops-only", action="store_true", help="Sans le modèle complet")
    p.set_defaults(handler=cmd_grad_check)

    p = sub.add_parser("curves", help="Fusionne des journaux d'entraînement en un CSV de comparaison")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--names", nargs="*")
    p.add_argument("--column", choices=["loss", "acc"], default="loss")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_curves)
    return parser


def apply_config_file(parser: CliParser, argv: Sequence[str]) -> None:
    """Injecte les clés du fichier --config comme valeurs par défaut ; les options explicites l'emportent."""
    pre = CliParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, "r", encoding="utf-8") as f:
            values = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"Fichier de configuration illisible {known.config} : {e}") from e
    if not isinstance(values, dict):
        raise UsageError("Le fichier de configuration doit contenir un objet JSON plat")
    values = {key.lstrip("-").replace("-", "_"): value for key, value in values.items()}
    values["lam"] = values.pop("lambda", values.get("lam"))
    if values["lam"] is None:
        del values["lam"]

    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    known_keys = {a.dest for a in parser._actions}
    for sub in subparsers.choices.values():
        dests = {a.dest for a in sub._actions}
        known_keys |= dests
        sub.set_defaults(**{k: v for k, v in values.items() if k in dests})
    unknown = sorted(set(values) - known_keys)
    if unknown:
        raise UsageError(f"Clés de configuration inconnues : {', '.join(unknown)}")
    parser.set_defaults(**{k: v for k, v in values.items() if k in {"verbose", "progress"}})


# Chargement des données et des points de contrôle


def load_data(path: str) -> Tuple[List[SceneExample], Dict[str, Any]]:
    """Lit un jeu de données et son fichier annexe (grammaire par défaut s'il manque)."""
    scenes = read_dataset(path)
    if Path(metadata_path(path)).exists():
        meta = read_metadata(path)
    else:
        logger.warning(f"Fichier annexe {metadata_path(path)} absent : grammaire par défaut")
        spec = default_grammar()
        meta = {"vocab": grammar_vocab(spec), "answers": spec.answers, "grammar": spec}
    if not scenes:
        raise ConfigError(f"Jeu de données vide : {path}")
    return scenes, meta


def checkpoint_vocab(ckpt: Checkpoint, meta: Optional[Dict[str, Any]] = None) -> Vocab:
    if "vocab" not in ckpt.extra:
        raise ConfigError("Le point de contrôle ne contient pas de vocabulaire")
    vocab = Vocab.from_list(ckpt.extra["vocab"])
    if meta is not None and meta["vocab"].to_list() != vocab.to_list():
        raise ConfigError("Le vocabulaire du jeu de données diffère de celui du point de contrôle")
    return vocab


def build_train_config(args: argparse.Namespace, scenes: Sequence[SceneExample], meta: Dict[str, Any],
                       init: Optional[Checkpoint] = None, **model_overrides: Any) -> TrainConfig:
    """Configuration d'entraînement depuis les options ; le tronc vient de `init` s'il est fourni."""
    if init is not None:
        model = init.config.model.model_copy(update={"dropout": args.dropout, **model_overrides})
        model = make_model_config(**model.model_dump())
    else:
        model = make_model_config(
            layers=args.layers, d=args.d, heads=args.heads, ffn=args.ffn, T=args.T,
            N=len(scenes[0].regions), d_in=len(scenes[0].regions[0].features),
            vocab_size=len(meta["vocab"]), n_classes=len(meta["grammar"].classes),
            dropout=args.dropout, region_positional=args.region_positional,
            visual_sees_sep=args.visual_sees_sep, class_probs_as_input=args.class_probs_as_input,
            region_pretext=args.region_pretext, **model_overrides,
        )
    fields = dict(
        model=model, mask_rate=args.mask_rate, strict_bert_masking=args.strict_bert_masking,
        lr=args.lr, warmup=args.warmup, batch_size=args.batch_size, steps=args.steps,
        clip_norm=args.clip_norm, checkpoint_every=args.checkpoint_every,
        eval_every=args.eval_every, log_every=args.log_every, seed=args.seed,
    )
    if getattr(args, "lam", None) is not None:
        fields["lam"] = args.lam
    return make_train_config(**fields)


def _finish_training(args: argparse.Namespace, result: TrainResult) -> int:
    if args.log:
        result.log.write_csv(args.log, include_wallclock=not args.no_wallclock)
    print(f"Point de contrôle : {args.out} (étape {result.checkpoint.step})")
    return EXIT_OK


def _load_val(args: argparse.Namespace, vocab: Vocab) -> Optional[List[SceneExample]]:
    if not args.val_data:
        return None
    val, val_meta = load_data(args.val_data)
    if val_meta["vocab"].to_list() != vocab.to_list():
        raise ConfigError("Le vocabulaire de validation diffère de celui d'entraînement")
    return val


def _write_lines(path: Optional[str], records: List[Dict[str, Any]]) -> None:
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
    if path:
        with atomic_open(path, "w") as f:
            f.write("".join(line + "\n" for line in lines))
        logger.info(f"{len(lines)} prédictions écrites dans {path}")
    else:
        for line in lines:
            print(line)


# Sous-commandes


def cmd_gen_data(args: argparse.Namespace) -> int:
    if args.scenes < 1:
        raise UsageError("--scenes doit être >= 1")
    full = load_grammar(args.grammar) if args.grammar else default_grammar()
    spec = full
    if args.split != "all":
        pretrain_spec, downstream_spec = split_grammar(full)
        spec = pretrain_spec if args.split == "pretrain" else downstream_spec
    vocab = grammar_vocab(full)
    seeds = [args.seed * SCENE_SEED_STRIDE + i for i in range(args.scenes)]
    scenes = generate_dataset(spec, seeds, args.N, args.noise, args.d_in, vocab=vocab)
    count = write_dataset(scenes, args.out)
    write_metadata(args.out, spec, answers=full.answers, vocab=vocab,
                   extra={"seed": args.seed, "N": args.N, "noise": args.noise,
                          "d_in": args.d_in, "split": args.split})
    print(f"{count} scènes écrites dans {args.out}")
    return EXIT_OK


def cmd_pretrain(args: argparse.Namespace) -> int:
    scenes, meta = load_data(args.data)
    vocab = meta["vocab"]
    cfg = build_train_config(args, scenes, meta)
    result = pretrain(scenes, cfg, vocab, val=_load_val(args, vocab), checkpoint_path=args.out,
                      progress=args.progress)
    return _finish_training(args, result)


def cmd_finetune_caption(args: argparse.Namespace) -> int:
    scenes, meta = load_data(args.data)
    init = load_checkpoint(args.init) if args.init else None
    vocab = checkpoint_vocab(init, meta) if init else meta["vocab"]
    cfg = build_train_config(args, scenes, meta, init)
    result = finetune_caption(scenes, init, cfg, vocab, val=_load_val(args, vocab),
                              checkpoint_path=args.out, progress=args.progress)
    return _finish_training(args, result)


def cmd_finetune_vqa(args: argparse.Namespace) -> int:
    scenes, meta = load_data(args.data)
    init = load_checkpoint(args.init) if args.init else None
    vocab = checkpoint_vocab(init, meta) if init else meta["vocab"]
    cfg = build_train_config(args, scenes, meta, init, n_answers=args.answers)
    result = finetune_vqa(scenes, init, cfg, vocab, answers=meta["answers"], val=_load_val(args, vocab),
                          checkpoint_path=args.out, progress=args.progress)
    return _finish_training(args, result)


def cmd_caption(args: argparse.Namespace) -> int:
    scenes, meta = load_data(args.data)
    ckpt = load_checkpoint(args.ckpt)
    vocab = checkpoint_vocab(ckpt, meta)
    predictions = decode_scenes(scenes, ckpt.weights, beam=args.beam, greedy=args.greedy,
                                max_len=args.max_len, length_alpha=args.length_alpha,
                                vocab=vocab, threads=args.threads)
    records = [{"scene_id": s.scene_id, "caption": p.text, "tokens": p.tokens, "score": p.score}
               for s, p in zip(scenes, predictions)]
    _write_lines(args.out, records)
    return EXIT_OK


def _checkpoint_answers(ckpt: Checkpoint) -> List[str]:
    answers = ckpt.extra.get("answers")
    if not answers:
        raise ConfigError("Le point de contrôle n'a pas de vocabulaire de réponses (fine-tuning VQA requis)")
    return list(answers)


def cmd_vqa(args: argparse.Namespace) -> int:
    scenes, meta = load_data(args.data)
    ckpt = load_checkpoint(args.ckpt)
    vocab = checkpoint_vocab(ckpt, meta)
    answers = _checkpoint_answers(ckpt)
    records = []
    for scene in scenes:
        for qa in scene.qa:
            pred = vqa_predict(scene, qa.question, ckpt.weights, topk=args.topk, answers=answers)
            records.append({"scene_id": scene.scene_id, "question": detokenize(qa.question, vocab),
                            "answers": [[a, s] for a, s in pred.answers]})
    _write_lines(args.out, records)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    scenes, meta = load_data(args.data)
    ckpt = load_checkpoint(args.ckpt)
    vocab = checkpoint_vocab(ckpt, meta)
    dataset_id = f"{Path(args.data).name}:{args.split}"
    if args.task == "caption":
        greedy = args.split == "val" and args.beam is None
        beam = args.beam or (1 if args.split == "val" else config.DECODING["beam"])
        report = evaluate_captions(scenes, ckpt.weights, vocab, dataset_id, beam=beam, greedy=greedy,
                                   max_len=args.max_len, length_alpha=args.length_alpha,
                                   threads=args.threads)
    else:
        answers = AnswerVocab(_checkpoint_answers(ckpt))
        scenes = relabel(scenes, answers, source_answers=meta["answers"])
        report = evaluate_vqa(scenes, ckpt.weights, answers, dataset_id, threads=args.threads)
    report.write_json(args.out)
    csv_path = str(Path(args.out).with_suffix(".csv"))
    report.write_csv(csv_path)
    for name, value in sorted(report.metrics.items()):
        print(f"{name}: {value:.4f}")
    print(f"Rapport : {args.out} ; exemples : {csv_path}")
    return EXIT_OK


def cmd_grad_check(args: argparse.Namespace) -> int:
    colorama_init()
    results = run_gradcheck_suite(args.seed, include_model=not args.ops_only)
    for r in results:
        status = f"{Fore.GREEN}PASS{Style.RESET_ALL}" if r.passed else f"{Fore.RED}FAIL{Style.RESET_ALL}"
        print(f"{status} {r.name:<32} erreur relative max {r.max_rel_error:.3e}")
    worst = max(r.max_rel_error for r in results)
    print(f"Erreur relative maximale : {worst:.3e} (seuil {TOLERANCE:.0e})")
    return EXIT_OK if worst < TOLERANCE else EXIT_FAILURE


def cmd_curves(args: argparse.Namespace) -> int:
    if args.names and len(args.names) != len(args.logs):
        raise UsageError(f"{len(args.names)} noms pour {len(args.logs)} journaux")
    names = args.names or [Path(p).stem for p in args.logs]
    logs = [TrainLog.read_csv(path, name) for path, name in zip(args.logs, names)]
    write_curves(args.out, merge_curves(logs, names, column=args.column))
    print(f"Courbes écrites dans {args.out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Fonction principale ; retourne le code de sortie."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"uvlp: erreur : {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help et --version
        return int(e.code or 0)

    log_level = "DEBUG" if args.verbose else config.LOGGING["level"]
    setup_logger(log_level, config.LOGGING["format"], config.LOGGING["file"])

    try:
        return args.handler(args)
    except UsageError as e:
        print(f"uvlp: erreur : {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UVLPError, OSError, ValueError) as e:
        logger.error(f"Échec de la commande {args.command} : {e}")
        logger.debug(traceback.format_exc())
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
