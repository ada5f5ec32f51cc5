"""Interface en ligne de commande.

Chaque commande valide l'ensemble de ses paramètres avant de toucher aux données
et traduit les échecs en codes de sortie : 0 succès, 1 échec à l'exécution,
2 erreur d'usage ou de validation.
"""

import argparse
import csv
import json
import logging
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from core.config import settings
from core.errors import (
    DegenerateFeature,
    InvalidParameter,
    ParseError,
    PlomError,
    PlomIOError,
    VersionMismatch,
)
from core.texts import CLI_DESCRIPTION, CLI_EPILOG, COMMAND_HELP, CONFIG_HELP, DEFAULTS_NOTE, SELECT_HELP
from models import (
    Command,
    DatasetId,
    DiagnosticsReport,
    ExtremeReport,
    FitConfig,
    FitSummary,
    HermiteDatasetSpec,
    HermiteSidecar,
    MatrixFormat,
    ModelHeader,
    ResidualBasis,
    RunConfig,
)
from services.data_service import (
    DataMatrix,
    generate_hermite_dataset,
    load_matrix,
    save_matrix,
    write_sidecar,
)
from services.diagnostics_service import conditional_expectation, diagnose, ensemble_mean, extreme_sample
from services.persistence_service import load_model, save_model
from services.pca_service import fit_pca
from services.pipeline_service import embed, fit, generate, generate_classic, summarize

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ValidationError, InvalidParameter, PlomIOError, ParseError, VersionMismatch, DegenerateFeature)

SCHEMAS = {
    "fit-summary": FitSummary,
    "diagnostics": DiagnosticsReport,
    "hermite-sidecar": HermiteSidecar,
    "extreme": ExtremeReport,
    "model-header": ModelHeader,
}


# ---------------------------------------------------------------------------
# Analyseur d'arguments
# ---------------------------------------------------------------------------


def _add_fit_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=Path, required=True, help="input matrix (CSV or plom-bin)")
    parser.add_argument("--config", type=Path, help=CONFIG_HELP)
    parser.add_argument("--format", dest="matrix_format", choices=[f.value for f in MatrixFormat])
    parser.add_argument("--transpose", action="store_true", help="CSV stores one sample per row")
    parser.add_argument("--select", help=SELECT_HELP)
    parser.add_argument("--eps-multiplier", type=float)
    parser.add_argument("--alpha-norm", type=float)
    parser.add_argument("--kappa", type=int)
    parser.add_argument("--m-max", type=int)
    parser.add_argument("--coordinate-scaling", choices=["b", "d"])
    parser.add_argument("--residual-basis", choices=[b.value for b in ResidualBasis])
    parser.add_argument("--delta", type=float, help="GH relative eigenvalue cutoff")
    parser.add_argument("--eps2-factor", type=float, help="GH kernel scale factor")
    parser.add_argument("--f0", type=float)
    parser.add_argument("--dr", type=float, help="ISDE step size")
    parser.add_argument("--burn-in", type=int)
    parser.add_argument("--stride", type=int)
    parser.add_argument("--no-whiten", action="store_true")
    parser.add_argument("--include-inputs", action="store_true")
    parser.add_argument("--pca", action="store_true", help="reduce with PCA before diffusion maps")
    parser.add_argument("--classic", action="store_true", help="also fit the classic baseline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plom",
        description=CLI_DESCRIPTION,
        epilog=f"{CLI_EPILOG}\n\n{DEFAULTS_NOTE}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--threads", type=int, help="worker cap (falls back to PLOM_THREADS)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str) -> argparse.ArgumentParser:
        return commands.add_parser(name, help=COMMAND_HELP[name], description=COMMAND_HELP[name])

    p = command(Command.HERMITE_GEN.value)
    p.add_argument("--dataset", required=True, choices=[d.value for d in DatasetId])
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05, help="noise standard deviation")
    p.add_argument("--unnormalized", action="store_true", help="use raw Hermite polynomials")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", dest="matrix_format", choices=[f.value for f in MatrixFormat])

    p = command(Command.FIT.value)
    _add_fit_options(p)
    p.add_argument("--out", type=Path, required=True, help="model file to write")

    p = command(Command.SAMPLE.value)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--n-mc", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, help="independent ISDE chains")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", dest="matrix_format", choices=[f.value for f in MatrixFormat])
    p.add_argument("--baseline", action="store_true", help="also sample the classic baseline")
    p.add_argument("--mean", action="store_true", help="also write the ensemble mean")

    for name in (Command.SPECTRUM, Command.RESIDUALS, Command.PCA_SPECTRUM):
        p = command(name.value)
        _add_fit_options(p)
        p.add_argument("--out", type=Path, required=True, help="CSV file to write")

    p = command(Command.EXTREME.value)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, help="JSON file (default: standard output)")

    p = command(Command.CONDITIONAL.value)
    p.add_argument("--model", type=Path, required=True, help="model that defines the input rows")
    p.add_argument("--samples", type=Path, required=True, help="directory written by sample")
    p.add_argument("--grid-size", type=int, default=21)
    p.add_argument("--grid-limit", type=float, default=2.0)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--out", type=Path, required=True)

    p = command(Command.SCHEMA.value)
    p.add_argument("name", choices=sorted(SCHEMAS))
    return parser


# ---------------------------------------------------------------------------
# Assemblage de la configuration
# ---------------------------------------------------------------------------


def _load_toml(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError:
        raise PlomIOError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"{path}: {e}")


def _parse_select(value: str) -> Dict[str, Any]:
    key, _, raw = value.partition("=")
    try:
        if key == "top_m":
            return {"strategy": "top_m", "top_m": int(raw)}
        if key in ("ratio", "theta"):
            return {"strategy": "ratio_threshold", "theta": float(raw)}
    except ValueError:
        pass
    raise InvalidParameter(f"--select expects top_m=K or ratio=THETA, got {value!r}")


def build_fit_config(args: argparse.Namespace) -> FitConfig:
    """Fichier TOML d'abord, options de ligne de commande par-dessus, le tout validé ensemble."""
    raw = _load_toml(getattr(args, "config", None))

    def put(section: str, key: str, value: Any) -> None:
        if value is not None:
            raw.setdefault(section, {})[key] = value

    put("dmaps", "eps_multiplier", getattr(args, "eps_multiplier", None))
    put("dmaps", "alpha_norm", getattr(args, "alpha_norm", None))
    put("dmaps", "kappa", getattr(args, "kappa", None))
    put("dmaps", "m_max", getattr(args, "m_max", None))
    put("dmaps", "coordinate_scaling", getattr(args, "coordinate_scaling", None))
    put("dmaps", "residual_basis", getattr(args, "residual_basis", None))
    put("gh", "delta", getattr(args, "delta", None))
    put("gh", "eps2_factor", getattr(args, "eps2_factor", None))
    put("isde", "f0", getattr(args, "f0", None))
    put("isde", "delta_r", getattr(args, "dr", None))
    put("isde", "burn_in", getattr(args, "burn_in", None))
    put("isde", "stride", getattr(args, "stride", None))
    if getattr(args, "select", None):
        raw.setdefault("selection", {}).update(_parse_select(args.select))
    if getattr(args, "no_whiten", False):
        put("latent", "whiten", False)
    if getattr(args, "pca", False):
        put("pca", "enabled", True)
    if getattr(args, "classic", False):
        put("classic", "enabled", True)
    if getattr(args, "include_inputs", False):
        raw["include_inputs"] = True
    return FitConfig.model_validate(raw)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    command = Command(args.command)
    needs_fit = command in {Command.FIT, Command.SPECTRUM, Command.RESIDUALS, Command.PCA_SPECTRUM}
    return RunConfig(
        command=command,
        fit=build_fit_config(args) if needs_fit else FitConfig(),
        data_path=getattr(args, "data", None),
        model_path=getattr(args, "model", None),
        out_path=getattr(args, "out", None),
        matrix_format=getattr(args, "matrix_format", None),
        transpose=getattr(args, "transpose", False),
        n_mc=getattr(args, "n_mc", 0) or 0,
        seed=getattr(args, "seed", 0),
        threads=args.threads or settings.threads,
    )


# ---------------------------------------------------------------------------
# Commandes
# ---------------------------------------------------------------------------


def _load_data(run: RunConfig) -> DataMatrix:
    return load_matrix(run.data_path, run.matrix_format, run.transpose)


def _write_rows(path: Path, header: Sequence[str], rows: List[Sequence[Any]]) -> None:
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise PlomIOError(f"cannot write {path}: {e}")
    logger.info(f"Wrote {len(rows)} rows to {path}")


def _write_json(path: Optional[Path], document: str) -> None:
    if path is None:
        print(document)
        return
    try:
        path.write_text(document + "\n")
    except OSError as e:
        raise PlomIOError(f"cannot write {path}: {e}")


def cmd_hermite_gen(args: argparse.Namespace, run: RunConfig) -> int:
    spec = HermiteDatasetSpec(
        dataset_id=args.dataset,
        n_samples=args.n,
        noise_std=args.noise,
        seed=args.seed,
        normalized=not args.unnormalized,
    )
    data = generate_hermite_dataset(spec)
    save_matrix(data, run.out_path, run.matrix_format)
    write_sidecar(run.out_path, spec, data)
    logger.info(f"Wrote {data.n_features}x{data.n_samples} dataset to {run.out_path}")
    return 0


def cmd_fit(args: argparse.Namespace, run: RunConfig) -> int:
    model = fit(_load_data(run), run.fit)
    save_model(model, run.out_path)
    print(summarize(model).model_dump_json(indent=2))
    return 0


def _realization_name(prefix: str, index: int, matrix_format: Union[MatrixFormat, str]) -> str:
    suffix = ".csv" if MatrixFormat(matrix_format) is MatrixFormat.CSV else ".plom"
    return f"{prefix}_{index:03d}{suffix}"


def cmd_sample(args: argparse.Namespace, run: RunConfig) -> int:
    model = load_model(run.model_path)
    matrix_format = MatrixFormat(run.matrix_format or MatrixFormat.PLOM_BIN)
    out_dir = run.out_path
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PlomIOError(f"cannot create {out_dir}: {e}")

    realizations = generate(model, run.n_mc, run.seed, args.chains)
    for i, realization in enumerate(realizations):
        save_matrix(realization, out_dir / _realization_name("sample", i, matrix_format), matrix_format)
    report = diagnose(model, realizations, seed=run.seed)
    _write_json(out_dir / "diagnostics.json", report.model_dump_json(indent=2))
    if args.mean:
        save_matrix(ensemble_mean(realizations), out_dir / _realization_name("mean", 0, matrix_format), matrix_format)

    if args.baseline:
        baseline = generate_classic(model, run.n_mc, run.seed)
        for i, realization in enumerate(baseline):
            save_matrix(realization, out_dir / _realization_name("classic", i, matrix_format), matrix_format)
        _write_json(out_dir / "diagnostics_classic.json", diagnose(model, baseline, seed=run.seed).model_dump_json(indent=2))

    logger.info(f"Wrote {len(realizations)} realizations to {out_dir}")
    return 0


def cmd_spectrum(args: argparse.Namespace, run: RunConfig) -> int:
    dmaps = embed(_load_data(run), run.fit).dmaps
    rows = [(i, repr(float(v))) for i, v in enumerate(dmaps.eigenvalues)]
    _write_rows(run.out_path, ["index", "eigenvalue"], rows)
    return 0


def cmd_residuals(args: argparse.Namespace, run: RunConfig) -> int:
    dmaps = embed(_load_data(run), run.fit).dmaps
    selected = set(dmaps.selected)
    rows = [
        (k, repr(float(dmaps.residuals[k])), str(k in selected).lower())
        for k in range(1, dmaps.m_max)
    ]
    _write_rows(run.out_path, ["index", "residual", "selected"], rows)
    return 0


def cmd_pca_spectrum(args: argparse.Namespace, run: RunConfig) -> int:
    data = _load_data(run)
    # variables brutes : les variances restent comparables entre elles
    ambient = data if run.fit.include_inputs else data.features()
    pca = fit_pca(ambient, energy=1.0)
    cumulative = np.cumsum(pca.explained_variance_ratio)
    rows = [
        (i, repr(float(mu)), repr(float(ratio)), repr(float(total)))
        for i, (mu, ratio, total) in enumerate(zip(pca.eigenvalues, pca.explained_variance_ratio, cumulative))
    ]
    _write_rows(run.out_path, ["index", "eigenvalue", "explained_ratio", "cumulative"], rows)
    return 0


def cmd_extreme(args: argparse.Namespace, run: RunConfig) -> int:
    report = extreme_sample(load_model(run.model_path))
    _write_json(run.out_path, report.model_dump_json(indent=2))
    return 0


def _read_realizations(directory: Path) -> List[DataMatrix]:
    if not directory.is_dir():
        raise PlomIOError(f"samples directory not found: {directory}")
    paths = sorted(directory.glob("sample_*.plom")) + sorted(directory.glob("sample_*.csv"))
    if not paths:
        raise PlomIOError(f"no sample_* files in {directory}")
    return [load_matrix(path) for path in paths]


def cmd_conditional(args: argparse.Namespace, run: RunConfig) -> int:
    model = load_model(run.model_path)
    input_rows = model.training.input_rows
    if not input_rows:
        raise InvalidParameter("model was fitted without --include-inputs; no input rows to condition on")
    if args.grid_size < 1 or args.grid_limit <= 0:
        raise InvalidParameter("grid size must be >= 1 and grid limit positive")
    realizations = [
        DataMatrix(r.values, model.training.feature_labels, input_rows)
        for r in _read_realizations(args.samples)
    ]
    axis = np.linspace(-args.grid_limit, args.grid_limit, args.grid_size)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    grid = np.column_stack([x1.ravel(), x2.ravel()])
    bandwidth = args.bandwidth or model.config.diagnostics.conditional_bandwidth

    expected = conditional_expectation(realizations, grid, bandwidth)
    input_labels = [model.training.labels()[i] for i in input_rows]
    rows = [
        [repr(float(v)) for v in point] + [repr(float(v)) for v in expected.values[:, q]]
        for q, point in enumerate(grid)
    ]
    _write_rows(run.out_path, input_labels + expected.labels(), rows)
    return 0


def cmd_schema(args: argparse.Namespace, run: RunConfig) -> int:
    print(json.dumps(SCHEMAS[args.name].model_json_schema(), indent=2))
    return 0


COMMANDS: Dict[Command, Callable[[argparse.Namespace, RunConfig], int]] = {
    Command.HERMITE_GEN: cmd_hermite_gen,
    Command.FIT: cmd_fit,
    Command.SAMPLE: cmd_sample,
    Command.SPECTRUM: cmd_spectrum,
    Command.RESIDUALS: cmd_residuals,
    Command.PCA_SPECTRUM: cmd_pca_spectrum,
    Command.EXTREME: cmd_extreme,
    Command.CONDITIONAL: cmd_conditional,
    Command.SCHEMA: cmd_schema,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Exécute une commande ; renvoie le code de sortie du processus."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.log_level:
        logging.getLogger().setLevel(args.log_level)

    try:
        run = build_run_config(args)
        settings.threads = run.threads
        return COMMANDS[run.command](args, run)
    except USAGE_ERRORS as e:
        logger.error(f"{args.command}: {e}")
        return 2
    except PlomError as e:
        logger.error(f"{args.command}: {e}")
        return 1
    except Exception as e:
        logger.exception(f"{args.command}: unexpected failure: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
