"""Command-line surface.

    qdeloc classify U.json [--tol T] [--seed S] [--format text|json]
    qdeloc synthesize U.json [--side A|B] [--out P.json]
    qdeloc simulate U.json P.json [--side A|B] [--samples N] [--seed S]
    qdeloc entangling-power U.json [--restarts R] [--max-iters N] [--seed S]
    qdeloc osr U.json
    qdeloc gallery [NAME] [--alpha A] [--d-a N] [--d-b N] [--blocks K] [--out U.json]

Exit codes: 0 on success (a negative verdict is still a success), 1 for
invalid input, 2 for internal failures.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from ._config import ToleranceConfig
from .analysis import classify, detect_controlled, operator_schmidt_decomposition
from .entangling import OptimizationConfig, entangling_power
from .exceptions import (
    INPUT_ERROR,
    INTERNAL_ERROR,
    ApplicationError,
    NotControlledError,
    QDelocError,
    ValidationError,
)
from .files import (
    classification_to_dict,
    dump_protocol,
    dump_unitary,
    entangling_to_dict,
    load_protocol,
    load_unitary,
    relocalization_to_dict,
    render,
    render_json,
    write_text,
)
from .gates import GALLERY, GateParams, build_gate
from .helpers import drop_none
from .locc import synthesize_relocalization_protocol, verify_one_piece_relocalization
from .version import get_version

logger = logging.getLogger(__name__)

DEFAULT_FIDELITY_TOL = 1e-9


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as ValidationError so they share the input-error exit code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ValidationError(f"{self.prog}: {message}")


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    write_text(out, text)


def _tolerances(args: argparse.Namespace) -> ToleranceConfig:
    # --tol moves the rank threshold that decides the operator Schmidt rank
    if args.tol is None:
        return ToleranceConfig()
    return ToleranceConfig().replace(tol_rank=args.tol)


def cmd_classify(args: argparse.Namespace) -> int:
    tol = _tolerances(args)
    u = load_unitary(args.unitary, tol.tol_unitary)
    report = classification_to_dict(classify(u, tol, args.seed))
    _emit(render("classification", report, args.format), args.out)
    return 0


def cmd_synthesize(args: argparse.Namespace) -> int:
    tol = _tolerances(args)
    u = load_unitary(args.unitary, tol.tol_unitary)
    form = detect_controlled(u, args.side, tol, args.seed)
    if form is None:
        raise NotControlledError("", err={"side": args.side})

    protocol = synthesize_relocalization_protocol(form)
    check = verify_one_piece_relocalization(
        u,
        protocol,
        side=protocol.protects or "B",
        n_samples=args.samples,
        seed=args.seed,
        tol=DEFAULT_FIDELITY_TOL,
        tolerances=tol,
    )
    if not check["verdict"]:
        raise ApplicationError(
            "synthesized protocol failed verification",
            err={"min_fidelity": check["min_fidelity"]},
        )
    logger.info(
        "synthesized %d-outcome protocol, min fidelity %.15f",
        len(form["blocks"]),
        check["min_fidelity"],
    )
    _emit(dump_protocol(protocol), args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    u = load_unitary(args.unitary)
    protocol = load_protocol(args.protocol)
    side = args.side or protocol.protects or "B"
    report = verify_one_piece_relocalization(
        u,
        protocol,
        side=side,
        n_samples=args.samples,
        seed=args.seed,
        tol=DEFAULT_FIDELITY_TOL if args.tol is None else args.tol,
    )
    _emit(render("relocalization", relocalization_to_dict(report), args.format), args.out)
    return 0


def cmd_entangling_power(args: argparse.Namespace) -> int:
    u = load_unitary(args.unitary)
    cfg = OptimizationConfig(
        **drop_none(
            {
                "restarts": args.restarts,
                "max_iters": args.max_iters,
                "tol": args.tol,
                "seed": args.seed,
            }
        )
    )
    report = entangling_to_dict(entangling_power(u, cfg))
    _emit(render("entangling_power", report, args.format), args.out)
    return 0


def cmd_osr(args: argparse.Namespace) -> int:
    tol = _tolerances(args)
    u = load_unitary(args.unitary, tol.tol_unitary)
    decomp = operator_schmidt_decomposition(u, tol.tol_rank)
    if args.format == "json":
        text = render_json(
            {
                "osr": len(decomp["lambdas"]),
                "schmidt_coefficients": [float(x) for x in decomp["lambdas"]],
                "residual": decomp["residual"],
            }
        )
    else:
        text = f"{len(decomp['lambdas'])}\n"
    _emit(text, args.out)
    return 0


def cmd_gallery(args: argparse.Namespace) -> int:
    if args.name is None:
        _emit("".join(f"{name}\n" for name in GALLERY), args.out)
        return 0

    params: Dict[str, Any] = drop_none(
        {
            "alpha": args.alpha,
            "d_a": args.d_a,
            "d_b": args.d_b,
            "n_blocks": args.blocks,
            "seed": args.seed,
        }
    )
    gate = build_gate(args.name, GateParams(**params))
    _emit(dump_unitary(gate), args.out)
    return 0


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="qdeloc", description="Classify bipartite unitaries by delocalization power.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {get_version()}")

    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="base seed for every random draw")
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--out", default=None, help="write the output here instead of stdout")
    common.add_argument("--verbose", action="store_true", help="log progress at INFO level")
    common.add_argument("--tol", type=float, default=None)

    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("classify", parents=[common], help="operator Schmidt rank and controlled forms")
    p.add_argument("unitary")
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("synthesize", parents=[common], help="write a relocalization protocol")
    p.add_argument("unitary")
    p.add_argument("--side", choices=("A", "B"), default="A", help="side holding the control")
    p.add_argument("--samples", type=_positive_int, default=100)
    p.set_defaults(handler=cmd_synthesize)

    p = sub.add_parser("simulate", parents=[common], help="verify a protocol against a gate")
    p.add_argument("unitary")
    p.add_argument("protocol")
    p.add_argument("--side", choices=("A", "B"), default=None, help="side whose piece is restored")
    p.add_argument("--samples", type=_positive_int, default=100)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("entangling-power", parents=[common], help="maximum output entanglement")
    p.add_argument("unitary")
    p.add_argument("--restarts", type=_positive_int, default=None)
    p.add_argument("--max-iters", type=_positive_int, default=None)
    p.set_defaults(handler=cmd_entangling_power)

    p = sub.add_parser("osr", parents=[common], help="operator Schmidt rank")
    p.add_argument("unitary")
    p.set_defaults(handler=cmd_osr)

    p = sub.add_parser("gallery", parents=[common], help="emit a named gate as a unitary file")
    p.add_argument("name", nargs="?", default=None, choices=sorted(GALLERY))
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--d-a", type=_positive_int, default=None)
    p.add_argument("--d-b", type=_positive_int, default=None)
    p.add_argument("--blocks", type=_positive_int, default=None)
    p.set_defaults(handler=cmd_gallery)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except QDelocError as e:
        sys.stderr.write(f"error: {e.message}\n")
        return e.code

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.handler(args)
    except QDelocError as e:
        sys.stderr.write(f"error: {e.message}\n")
        if isinstance(e.error, dict):
            for key, value in sorted(e.error.items()):
                sys.stderr.write(f"  {key}: {value}\n")
        return e.code
    except ValueError as e:
        sys.stderr.write(f"error: {e}\n")
        return INPUT_ERROR
    except Exception:
        logger.exception("internal failure")
        return INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
