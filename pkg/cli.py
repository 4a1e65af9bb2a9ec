"""
QIBOUND COMMAND LINE
====================
Batch front end: squeezing limits, QI bounds, sweeps and the Fock-model
verification runs, emitted as a table, CSV or JSON.

    python cli.py limit --tau 0.01 --tau 1
    python cli.py limit --reduction -6.2
    python cli.py bound --probe gaussian --t0 0.01 --omega0 1 --bandwidth 0.001
    python cli.py verify --modes 3 --nmax 6 --seed 7 --format json --out scan.json
"""

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from dotenv import load_dotenv

from bounds import (
    BoundQuery,
    FieldKind,
    compare_limits,
    inverse_limits,
    qi_bound,
    sweep_bounds,
)
from config.settings import settings
from errors import ConfigError, DomainError, QIBoundError
from fock import FieldState, FockSpace, ModeLayout, StateKind, StateSpec, build_modes, make_state
from utils.logger import apply_level, setup_logging
from verify import (
    DecompositionKind,
    decomposition_check,
    default_kind,
    energy_density_scan,
    inequality_scan,
    optimize_epsilon,
    pair_demo_setup,
    random_states,
)
from weighting import ProbeFunction, ProbeKind, SensitivityFunction, SensitivityKind, load_probe_table

__version__ = "1.0.0"

logger = setup_logging(__name__)

SUBCOMMANDS = ("bound", "limit", "verify", "decompose", "energy", "sweep")
FORMATS = ("table", "csv", "json")

COLUMNS = {
    'limit': ['tau', 'paper_erf_db', 'direct_integral_db', 'gap_db', 'error'],
    'reduction': ['r_db', 'tau_paper_erf', 'tau_direct_integral'],
    'bound': ['probe', 't0', 'sensitivity', 'omega0', 'bandwidth', 'field_kind',
              'delta_max', 'vacuum_e2', 'r_db', 'quadrature_error', 'normalized'],
    'sweep': ['probe', 'tau', 't0', 'delta_max', 'vacuum_e2', 'r_db', 'paper_erf_db', 'direct_integral_db', 'error'],
    'verify': ['state', 'kind', 'delta', 'bound', 'margin'],
    'decompose': ['kind', 'operator_residual', 'interior_residual', 'residue_constant',
                  'vacuum_residue', 'residue_relative_gap', 'frequency_nodes'],
    'energy': ['t', 'x', 'y', 'z', 'e2', 'b2', 'rho'],
}


@dataclass(frozen=True)
class RunConfig:
    """
    A fully resolved run; building one validates everything a subcommand
    touches. Fock runs carry their space and every state already built and
    capacity-checked.
    """
    subcommand: str
    probe: ProbeFunction
    sensitivity: SensitivityFunction
    field_kind: FieldKind
    layout: ModeLayout
    nmax: int
    states: Tuple[StateSpec, ...]
    taus: Tuple[float, ...]
    reductions: Tuple[float, ...] = ()
    random_count: int = 0
    fmt: str = "table"
    out: Optional[str] = None
    seed: int = 1234
    progress: bool = False
    tolerances: dict = field(default_factory=dict)
    space: Optional[FockSpace] = None
    field_states: Tuple[FieldState, ...] = ()


@dataclass
class Report:
    subcommand: str
    rows: pd.DataFrame
    summary: dict = field(default_factory=dict)


# Configuration ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qibound", description="Quantum-inequality squeezing limits")
    parser.add_argument('--version', action='version', version=f"qibound {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="YAML file merged over config/config.yaml")
    common.add_argument('--probe', help="lorentzian | gaussian | table:PATH")
    common.add_argument('--t0', type=float)
    common.add_argument('--omega0', type=float)
    common.add_argument('--bandwidth', type=float)
    common.add_argument('--sensitivity', choices=[k.value for k in SensitivityKind])
    common.add_argument('--field', choices=[k.value for k in FieldKind])
    common.add_argument('--tau', type=float, action='append')
    common.add_argument('--reduction', type=float, action='append', help="dB; limit reports the largest allowed tau")
    common.add_argument('--modes', type=int, help="number of collinear momenta")
    common.add_argument('--nmax', type=int)
    common.add_argument('--random-states', type=int, dest='random_states')
    common.add_argument('--seed', type=int)
    common.add_argument('--rel-tol', type=float, dest='rel_tol')
    common.add_argument('--operator-tol', type=float, dest='operator_tol')
    common.add_argument('--format', choices=FORMATS, dest='fmt')
    common.add_argument('--out')
    common.add_argument('--log-level', dest='log_level')
    common.add_argument('--progress', action='store_true')

    subparsers = parser.add_subparsers(dest='subcommand', required=True)
    for name in SUBCOMMANDS:
        subparsers.add_parser(name, parents=[common])
    return parser


def parse_probe(text: str, t0: Optional[float]) -> ProbeFunction:
    if text.startswith("table:"):
        return load_probe_table(text[len("table:"):], t0)
    kinds = {'lorentzian': ProbeKind.LORENTZIAN_SQUARED, 'lorentzian_squared': ProbeKind.LORENTZIAN_SQUARED,
             'gaussian': ProbeKind.GAUSSIAN}
    if text not in kinds:
        raise ConfigError(f"Unknown probe {text!r}; expected lorentzian, gaussian or table:PATH")
    if t0 is None:
        raise ConfigError("Probe needs t0")
    builder = ProbeFunction.gaussian if kinds[text] is ProbeKind.GAUSSIAN else ProbeFunction.lorentzian_squared
    return builder(float(t0))


def parse_sensitivity(kind: str, omega0: float, bandwidth: float) -> SensitivityFunction:
    try:
        kind = SensitivityKind(kind)
    except ValueError:
        raise ConfigError(f"Unknown sensitivity {kind!r}")
    if kind is SensitivityKind.SHARP_LINE:
        return SensitivityFunction.sharp_line(float(omega0))
    if kind is SensitivityKind.GAUSSIAN_BAND:
        return SensitivityFunction.gaussian_band(float(omega0), float(bandwidth))
    return SensitivityFunction.rect_band(float(omega0), float(bandwidth))


def _config_value(value, key: str, default=None):
    return value if value is not None else settings.get(key, default)


# Flags energy does not take; its setup lives in the energy section of the config.
ENERGY_FIXED_FLAGS = (('--probe', 'probe'), ('--t0', 't0'), ('--nmax', 'nmax'),
                      ('--modes', 'modes'), ('--field', 'field'))


def _warn_ignored_flags(args: argparse.Namespace):
    ignored = [flag for flag, dest in ENERGY_FIXED_FLAGS if getattr(args, dest) is not None]
    if ignored:
        logger.warning(f"energy ignores {', '.join(ignored)}; its setup comes from the energy section of the config")


def build_config(args: argparse.Namespace) -> RunConfig:
    """Resolve flags over the configuration file; raises ConfigError on anything unusable."""
    if args.config:
        try:
            settings.load_file(args.config)
        except (OSError, yaml.YAMLError, ValueError) as e:
            raise ConfigError(f"Cannot load config {args.config}: {e}")

    overrides = {}
    if args.rel_tol is not None:
        overrides['quadrature'] = {'rel_tol': args.rel_tol}
    if args.operator_tol is not None:
        overrides['verify'] = {'operator_tolerance': args.operator_tol}
    settings.merge(overrides)

    try:
        fock_run = args.subcommand in ("verify", "decompose", "energy")
        default_t0 = settings.get('verify.probe_t0', 1.0) if fock_run else settings.get('probe.t0')
        probe = parse_probe(_config_value(args.probe, 'probe.kind', 'gaussian'),
                            args.t0 if args.t0 is not None else default_t0)
        sensitivity = parse_sensitivity(
            _config_value(args.sensitivity, 'sensitivity.kind', 'rect_band'),
            _config_value(args.omega0, 'sensitivity.omega0', 1.0),
            _config_value(args.bandwidth, 'sensitivity.bandwidth', 0.001),
        )

        layout_raw = dict(settings.get('fock.modes', {}))
        if args.field is not None:
            layout_raw['field'] = args.field
        if args.modes is not None:
            layout_raw.update(layout='collinear', count=args.modes)
        if args.omega0 is not None:
            layout_raw['omega0'] = args.omega0
        layout = ModeLayout.from_dict(layout_raw)
        field_kind = FieldKind(args.field) if args.field else (
            layout.field_kind if fock_run else FieldKind.ELECTROMAGNETIC)
        if fock_run:
            build_modes(layout)

        states = tuple(StateSpec.from_dict(raw) for raw in settings.get('verify.states', []) or [])
        taus = tuple(float(t) for t in (args.tau or settings.get('limit.taus', [])))
        reductions = tuple(float(r) for r in (args.reduction or ()))
        nmax = int(_config_value(args.nmax, 'fock.nmax', 6))
        random_count = int(_config_value(args.random_states, 'verify.random_states', 0))
        seed = int(_config_value(args.seed, 'output.seed', 1234))
        fmt = _config_value(args.fmt, 'output.format', 'table')
    except QIBoundError:
        raise
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"Invalid configuration: {e}")

    if fmt not in FORMATS:
        raise ConfigError(f"Unknown output format {fmt!r}")
    if any(not t > 0 for t in taus):
        raise DomainError(f"tau values must be positive, got {list(taus)}")
    if any(r >= 0 for r in reductions):
        raise DomainError("Reductions are negative dB values")
    if args.subcommand in ("limit", "sweep") and not (taus or reductions):
        raise ConfigError("No tau values given")
    if args.subcommand == "limit" and args.tau and args.reduction:
        raise ConfigError("limit takes either --tau or --reduction, not both")
    if args.subcommand == "energy":
        _warn_ignored_flags(args)
    if nmax < 1 or random_count < 0:
        raise ConfigError("nmax must be >= 1 and random-states >= 0")

    space, field_states = None, ()
    if args.subcommand in ("verify", "decompose"):
        space = FockSpace(build_modes(layout), nmax)
    if args.subcommand == "verify":
        built = [make_state(space, spec) for spec in states]
        # The discrete inequality holds for every vector, so random states skip the capacity check.
        built += [make_state(space, spec, capacity_tolerance=math.inf)
                  for spec in random_states(space, random_count, np.random.default_rng(seed))]
        field_states = tuple(built)

    tolerances = {
        'rel_tol': settings.get('quadrature.rel_tol'),
        'operator_tolerance': settings.get('verify.operator_tolerance'),
        'margin_tolerance': settings.get('verify.margin_tolerance'),
    }
    return RunConfig(
        subcommand=args.subcommand, probe=probe, sensitivity=sensitivity, field_kind=field_kind,
        layout=layout, nmax=nmax, states=states, taus=taus, reductions=reductions,
        random_count=random_count, fmt=fmt, out=_config_value(args.out, 'output.path'), seed=seed,
        progress=args.progress, tolerances=tolerances, space=space, field_states=field_states,
    )


# Subcommands ------------------------------------------------------------

def _run_limit(config: RunConfig) -> Report:
    if config.reductions:
        return Report('reduction', inverse_limits(config.reductions))
    table = compare_limits(config.taus, config.progress)
    return Report('limit', table, {'max_gap_db': float(table['gap_db'].abs().max())})


def _run_bound(config: RunConfig) -> Report:
    result = qi_bound(BoundQuery(config.probe, config.sensitivity, config.field_kind))
    row = {
        'probe': config.probe.kind.value,
        't0': config.probe.t0,
        'sensitivity': config.sensitivity.kind.value,
        'omega0': config.sensitivity.omega0,
        'bandwidth': config.sensitivity.bandwidth,
        'field_kind': config.field_kind.value,
    }
    row.update(result.as_dict())
    return Report('bound', pd.DataFrame([row]))


def _run_sweep(config: RunConfig) -> Report:
    table = sweep_bounds(config.taus, config.sensitivity, field_kind=config.field_kind, progress=config.progress)
    return Report('sweep', table)


def _decomposition_kinds(space: FockSpace) -> List[DecompositionKind]:
    if space.modes.field_kind is FieldKind.SCALAR:
        return [DecompositionKind.SCALAR_A, DecompositionKind.SCALAR_A_TILDE]
    return [default_kind(space.modes)]


def _run_decompose(config: RunConfig) -> Report:
    space = config.space
    reports = [decomposition_check(space, config.probe, kind=kind, strict=True) for kind in _decomposition_kinds(space)]
    return Report('decompose', pd.DataFrame([r.summary() for r in reports]))


def _run_verify(config: RunConfig) -> Report:
    space = config.space
    decomposition = decomposition_check(space, config.probe, kind=default_kind(space.modes), strict=True)
    scan = inequality_scan(space, config.probe, None, list(config.field_states), seed=config.seed)
    summary = {
        'bound': scan.bound,
        'min_margin': scan.min_margin,
        'states': len(scan.rows),
        'operator_residual': decomposition.operator_residual,
    }
    return Report('verify', scan.rows, summary)


def _run_energy(config: RunConfig) -> Report:
    omega0 = settings.get('energy.omega0', 1.0)
    space, probe, F = pair_demo_setup(omega0, settings.get('energy.nmax', 2))
    optimum = optimize_epsilon(space, probe, None, F)
    state = make_state(space, StateSpec(StateKind.PAIR_SUPERPOSITION, epsilon=optimum.eps_star, pair_coefficients=F))
    span = settings.get('energy.t_span', 3.0) / omega0
    t_grid = np.linspace(-span, span, settings.get('energy.points', 61))
    scan = energy_density_scan(space, state, [(0.0, 0.0, 0.0)], t_grid)
    summary = {
        'eps_star': optimum.eps_star,
        'delta_min': optimum.delta_min,
        'min_rho': scan.min_rho,
        'total_energy': scan.total_energy,
    }
    return Report('energy', scan.table, summary)


RUNNERS = {
    'limit': _run_limit,
    'bound': _run_bound,
    'sweep': _run_sweep,
    'decompose': _run_decompose,
    'verify': _run_verify,
    'energy': _run_energy,
}


def run(config: RunConfig) -> Report:
    logger.info(f"Running {config.subcommand}")
    report = RUNNERS[config.subcommand](config)
    report.rows = report.rows[COLUMNS[report.subcommand]]
    return report


# Output -----------------------------------------------------------------

def _plain(value):
    """JSON-safe scalar; non-finite floats become null."""
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def metadata(config: RunConfig) -> dict:
    return {
        'subcommand': config.subcommand,
        'seed': config.seed,
        'tolerances': config.tolerances,
        'version': __version__,
    }


def render(report: Report, fmt: str, meta: dict) -> str:
    rows = report.rows
    if fmt == "json":
        document = {
            'metadata': meta,
            'summary': {k: _plain(v) for k, v in report.summary.items()},
            'rows': [{k: _plain(v) for k, v in row.items()} for row in rows.to_dict(orient='records')],
        }
        return json.dumps(document, indent=2, allow_nan=False) + "\n"

    if fmt == "csv":
        # Seed as the last column; line one stays the header.
        buffer = io.StringIO()
        rows.assign(seed=meta['seed']).to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()

    formatters = {c: (lambda v: f"{v:.2f}") for c in rows.columns if c.endswith('_db') or c == 'r_db'}
    header = f"# qibound {meta['version']} {meta['subcommand']} seed={meta['seed']}"
    lines = [header, rows.to_string(index=False, formatters=formatters)]
    lines += [f"{k}: {v}" for k, v in report.summary.items()]
    return "\n".join(lines) + "\n"


def emit(report: Report, fmt: str, path: Optional[str], meta: dict) -> str:
    text = render(report, fmt, meta)
    if path:
        with open(path, 'w', newline='') as f:
            f.write(text)
        logger.info(f"Wrote {path}")
    else:
        sys.stdout.write(text)
    return text


def parse_report(text: str, fmt: str) -> Tuple[dict, pd.DataFrame]:
    """Inverse of render for the machine formats: (metadata and summary, rows)."""
    if fmt == "json":
        document = json.loads(text)
        return {'metadata': document['metadata'], 'summary': document['summary']}, pd.DataFrame(document['rows'])
    if fmt == "csv":
        rows = pd.read_csv(io.StringIO(text))
        meta = {}
        if 'seed' in rows.columns:
            seeds = rows.pop('seed')
            if len(seeds):
                meta['seed'] = int(seeds.iloc[0])
        return {'metadata': meta}, rows
    raise ConfigError(f"Cannot parse {fmt!r} output")


def error_record(error: BaseException, exit_status: int) -> str:
    return json.dumps({'error': type(error).__name__, 'message': str(error), 'exit_status': exit_status})


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    if args.log_level:
        apply_level(args.log_level.upper())

    try:
        config = build_config(args)
        report = run(config)
        emit(report, config.fmt, config.out, metadata(config))
    except QIBoundError as e:
        sys.stderr.write(error_record(e, e.exit_status) + "\n")
        return e.exit_status
    except OSError as e:
        sys.stderr.write(error_record(e, 3) + "\n")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
