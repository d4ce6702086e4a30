"""Command-line interface.

One subcommand per pipeline artifact: `simulate` runs the cluster-expansion
ensemble and fits T2, `predict` applies the scaling law to one structure,
`screen` ranks a corpus, `periodic-table` sweeps hypothetical single-element
hosts, `decouple` reports pair decoupling fields, `calibrate` re-derives the
scaling constants from simulations, and `fetch` syncs a remote corpus into
the local cache.

Data goes to files or standard output; progress and warnings go to standard
error. Usage errors exit 1, library failures exit 2. Identical invocations
(same seed) produce bitwise-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import time
from itertools import combinations, combinations_with_replacement

from .errors import SpinbathError, ValidationError


class _UsageError(Exception):
    """Flag combination argparse cannot express; exits 1 like other usage errors."""


_ISOTOPE_RE = re.compile(r"^([0-9]{1,3})([A-Za-z][a-z]?)$")


def _isotope_symbol(text: str) -> tuple[str, int]:
    m = _ISOTOPE_RE.match(text.strip())
    if not m:
        raise argparse.ArgumentTypeError(
            f"expected an isotope symbol like 13C or 29Si, got {text!r}"
        )
    mass, element = m.groups()
    return element.capitalize(), int(mass)


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _element_list(text: str) -> tuple:
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    if not items:
        raise argparse.ArgumentTypeError("empty element list")
    return items


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_sim_flags(sub, default_instances: int):
    sub.add_argument("--field-T", type=float, required=True, help="magnetic field (tesla)")
    sub.add_argument("--order", type=int, default=2, choices=(1, 2), help="expansion order")
    sub.add_argument("--instances", type=int, default=default_instances, help="bath realizations to average")
    sub.add_argument("--seed", type=int, default=0, help="master seed; fixes every random draw")
    sub.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    sub.add_argument("--n-times", type=int, default=201, help="points on the time grid")


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _figure_path(out: str) -> str:
    return os.path.splitext(out)[0] + ".png"


def _progress(message: str):
    print(message, file=sys.stderr, flush=True)


def build_parser() -> _Parser:
    parser = _Parser(prog="spinbath", description=__doc__.split("\n\n")[0])
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="cluster-expansion echo ensemble plus stretched-exponential fit")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--cif", help="crystal structure file (lattice bath)")
    src.add_argument("--isotope", type=_isotope_symbol, metavar="SYM",
                     help="single-isotope random bath, e.g. 13C (needs --density)")
    sim.add_argument("--density", type=_positive_float, default=None,
                     help="spin density in cm^-3 (random bath only)")
    _add_sim_flags(sim, default_instances=20)
    sim.add_argument("--t-max", type=_positive_float, default=None,
                     help="time-grid end in seconds (default: 3x the scaling-law T2)")
    sim.add_argument("--r-bath", type=_positive_float, default=None,
                     help="bath radius in angstroms (default 35, density-scaled for random baths)")
    sim.add_argument("--r-pair", type=_positive_float, default=None,
                     help="pair cutoff in angstroms (default 10, density-scaled for random baths)")
    sim.add_argument("--pair-mode", default="all",
                     choices=("all", "homonuclear-only", "heteronuclear-only"),
                     help="which nuclear pairs enter the expansion")
    sim.add_argument("--electron-g", type=float, default=2.0, help="defect electron g-factor")
    sim.add_argument("--no-fit", action="store_true",
                     help="write the curve only (useful when the curve never decays)")
    sim.add_argument("--out", required=True, help="curve CSV path (t_s,L,stderr)")
    sim.add_argument("--plot", action="store_true", help="also render the curve beside --out")

    pred = subs.add_parser("predict", help="scaling-law T2 for one structure")
    pred.add_argument("--cif", required=True)
    pred.add_argument("--out", default=None, help="also write the JSON here")

    scr = subs.add_parser("screen", help="rank a corpus directory by predicted T2")
    scr.add_argument("--corpus", required=True, help="directory of material JSON records")
    scr.add_argument("--min-gap", type=float, default=1.0, help="bandgap floor in eV (inclusive)")
    scr.add_argument("--max-e-hull", type=float, default=0.0, help="stability ceiling in eV/atom")
    scr.add_argument("--min-t2", type=_positive_float, default=None, help="drop rows below this T2 (s)")
    scr.add_argument("--out", required=True, help="report CSV path; a JSON sidecar lands beside it")
    scr.add_argument("--plot", action="store_true", help="also render the ranking beside --out")

    pt = subs.add_parser("periodic-table", help="T2 per single-element host at natural abundance")
    pt.add_argument("--density", type=_positive_float, required=True, help="element density in cm^-3")
    pt.add_argument("--exclude", type=_element_list, default=("He",),
                    help="comma-separated elements to skip (default He)")
    pt.add_argument("--out", required=True, help="CSV path (element,Z,t2_s)")
    pt.add_argument("--plot", action="store_true")

    dec = subs.add_parser("decouple", help="pair decoupling fields for a structure's isotopes")
    dec.add_argument("--cif", required=True)
    dec.add_argument("--out", required=True, help="CSV path (element_i,A_i,element_j,A_j,l_A,b_dec_T)")
    dec.add_argument("--plot", action="store_true")

    cal = subs.add_parser("calibrate", help="re-derive scaling constants from simulated baths")
    cal.add_argument("--grid", required=True,
                     help='JSON file: {"isotopes": ["13C", ...], "densities_cm3": [...]}')
    _add_sim_flags(cal, default_instances=8)
    cal.add_argument("--out", required=True, help="calibrated-constants JSON path")
    cal.add_argument("--plot", action="store_true")

    fet = subs.add_parser("fetch", help="sync the remote materials corpus into the cache")
    fet.add_argument("--config", required=True,
                     help="key=value file with matdb.base_url and optional cache.dir")
    fet.add_argument("--min-gap", type=float, default=1.0)
    fet.add_argument("--max-e-hull", type=float, default=0.0)
    fet.add_argument("--elements", type=_element_list, default=None,
                     help="comma-separated element whitelist")
    return parser


def _load_table():
    from .isotopes import load_bundled_table

    return load_bundled_table()


def _cmd_simulate(args) -> int:
    from .bath import density_scaled_cutoffs
    from .cce import RandomBathSpec, SimulationConfig, ensemble_coherence
    from .cif import parse_cif
    from .fitting import fit_stretched_exponential

    table = _load_table()
    if args.cif is not None:
        if args.density is not None:
            raise _UsageError("--density applies only to --isotope baths")
        with open(args.cif, encoding="utf-8") as fh:
            structure = parse_cif(fh.read())
        r_bath = args.r_bath if args.r_bath is not None else 35.0
        r_pair = args.r_pair if args.r_pair is not None else 10.0
        label = args.cif
    else:
        if args.density is None:
            raise _UsageError("--isotope baths need --density")
        element, mass = args.isotope
        structure = RandomBathSpec(isotope=table.get(element, mass), density_cm3=args.density)
        r_bath, r_pair = density_scaled_cutoffs(args.density)
        if args.r_bath is not None:
            r_bath = args.r_bath
        if args.r_pair is not None:
            r_pair = args.r_pair
        label = f"{mass}{element} at {args.density:g} cm^-3"

    config = SimulationConfig(
        field_T=args.field_T,
        electron_g=args.electron_g,
        order=args.order,
        t_max=args.t_max,
        n_times=args.n_times,
        n_instances=args.instances,
        master_seed=args.seed,
        r_bath=r_bath,
        r_pair=r_pair,
        pair_mode=args.pair_mode,
        threads=args.threads,
    )
    _progress(
        f"simulate: {label}, B = {args.field_T:g} T, order {args.order}, "
        f"{args.instances} instances, seed {args.seed}"
    )
    t0 = time.monotonic()
    curve = ensemble_coherence(structure, table, config)
    _progress(f"simulate: ensemble done in {time.monotonic() - t0:.1f} s")

    lines = ["t_s,L,stderr"]
    for t, v, s in zip(curve.times_s, curve.values, curve.stderr):
        lines.append(f"{float(t)!r},{float(v)!r},{float(s)!r}")
    _write_text(args.out, "\n".join(lines) + "\n")

    fit = None
    if not args.no_fit:
        fit = fit_stretched_exponential(curve)
        print(json.dumps(fit.to_json_dict(), indent=2))
    if args.plot:
        from .plots import plot_coherence_curve

        plot_coherence_curve(curve, fit, _figure_path(args.out))
        _progress(f"simulate: figure written to {_figure_path(args.out)}")
    return 0


def _cmd_predict(args) -> int:
    from .cif import parse_cif
    from .isotopes import isotope_densities
    from .scaling import UNBOUNDED, combine_t2, t2_isotope

    table = _load_table()
    with open(args.cif, encoding="utf-8") as fh:
        cell = parse_cif(fh.read())
    element_densities = cell.element_densities()
    per_isotope = {}
    components = []
    for isotope, n_i in isotope_densities(table, element_densities):
        t2 = t2_isotope(isotope.g_factor, isotope.spin, n_i)
        per_isotope[str(isotope)] = t2
        components.append((t2, 2.0))
    combined = combine_t2(components)
    payload = {
        "cif": args.cif,
        "element_densities_cm3": element_densities,
        "per_isotope_t2_s": per_isotope,
        "combined_t2_s": "UNBOUNDED" if combined is UNBOUNDED else combined,
    }
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        _write_text(args.out, text + "\n")
    return 0


def _cmd_screen(args) -> int:
    from .screening import ScreenFilters, load_corpus, screen_corpus

    table = _load_table()
    load = load_corpus(args.corpus)
    for name, reason in load.skipped:
        _progress(f"screen: skipped {name}: {reason}")
    filters = ScreenFilters(
        min_gap_ev=args.min_gap, max_e_hull_ev=args.max_e_hull, min_t2_s=args.min_t2
    )
    report = screen_corpus(load.records, table, filters=filters)
    for material_id, reason in report.skipped:
        _progress(f"screen: could not predict {material_id}: {reason}")
    _write_text(args.out, report.to_csv())
    sidecar = os.path.splitext(args.out)[0] + ".json"
    _write_text(sidecar, json.dumps(report.to_json_dict(), indent=2) + "\n")
    _progress(
        f"screen: {len(report.rows)} of {len(load.records)} materials ranked; "
        f"report in {args.out}, breakdowns in {sidecar}"
    )
    if args.plot:
        from .plots import plot_screening_report

        plot_screening_report(report, _figure_path(args.out))
    return 0


def _cmd_periodic_table(args) -> int:
    from .scaling import UNBOUNDED, element_table

    table = _load_table()
    rows = element_table(table, args.density, exclude=frozenset(args.exclude))
    lines = ["element,Z,t2_s"]
    for element, t2 in rows.items():
        t2_text = "UNBOUNDED" if t2 is UNBOUNDED else repr(t2)
        lines.append(f"{element},{table.atomic_number(element)},{t2_text}")
    _write_text(args.out, "\n".join(lines) + "\n")
    if args.plot:
        from .plots import plot_element_table

        plot_element_table(list(rows.items()), _figure_path(args.out))
    return 0


def _cmd_decouple(args) -> int:
    from .cif import parse_cif
    from .crystal import min_interatomic_distance
    from .errors import HomonuclearPairError
    from .scaling import decoupling_field

    table = _load_table()
    with open(args.cif, encoding="utf-8") as fh:
        cell = parse_cif(fh.read())
    elements = sorted({s.element for s in cell.sites}, key=table.atomic_number)
    rows = []
    for elem_a, elem_b in combinations_with_replacement(elements, 2):
        if elem_a == elem_b:
            iso_pairs = combinations(table.spinful_isotopes_of(elem_a), 2)
        else:
            iso_pairs = (
                (ia, ib)
                for ia in table.spinful_isotopes_of(elem_a)
                for ib in table.spinful_isotopes_of(elem_b)
            )
        distance = None
        for iso_a, iso_b in iso_pairs:
            try:
                if distance is None:
                    distance = min_interatomic_distance(cell, elem_a, elem_b)
                estimate = decoupling_field(iso_a, iso_b, distance)
            except HomonuclearPairError:
                continue
            rows.append((iso_a, iso_b, distance, estimate.b_dec))
    lines = ["element_i,A_i,element_j,A_j,l_A,b_dec_T"]
    for iso_a, iso_b, distance, b_dec in rows:
        lines.append(
            f"{iso_a.element_symbol},{iso_a.mass_number},"
            f"{iso_b.element_symbol},{iso_b.mass_number},{distance!r},{b_dec!r}"
        )
    _write_text(args.out, "\n".join(lines) + "\n")
    if not rows:
        _progress("decouple: no heteronuclear spinful pairs in this structure")
    if args.plot:
        from .plots import plot_decoupling_fields

        plot_decoupling_fields(
            [(f"{a}-{b}", b_dec) for a, b, _, b_dec in rows], _figure_path(args.out)
        )
    return 0


def _cmd_calibrate(args) -> int:
    from .bath import density_scaled_cutoffs
    from .cce import RandomBathSpec, SimulationConfig, ensemble_coherence
    from .fitting import fit_stretched_exponential
    from .scaling import calibrate_constants

    with open(args.grid, encoding="utf-8") as fh:
        grid = json.load(fh)
    try:
        symbols = list(grid["isotopes"])
        densities = [float(n) for n in grid["densities_cm3"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{args.grid}: grid needs 'isotopes' and 'densities_cm3' lists ({exc})")

    table = _load_table()
    dataset = []
    for symbol in symbols:
        element, mass = _parse_isotope_or_fail(symbol)
        isotope = table.get(element, mass)
        for density in densities:
            r_bath, r_pair = density_scaled_cutoffs(density)
            config = SimulationConfig(
                field_T=args.field_T,
                order=args.order,
                n_times=args.n_times,
                n_instances=args.instances,
                master_seed=args.seed,
                r_bath=r_bath,
                r_pair=r_pair,
                threads=args.threads,
            )
            t0 = time.monotonic()
            curve = ensemble_coherence(
                RandomBathSpec(isotope=isotope, density_cm3=density), table, config
            )
            fit = fit_stretched_exponential(curve)
            _progress(
                f"calibrate: {isotope} at {density:g} cm^-3 -> "
                f"T2 = {fit.t2:.4e} s, eta = {fit.eta:.2f} "
                f"({time.monotonic() - t0:.1f} s)"
            )
            dataset.append((isotope, density, fit.t2))
    result = calibrate_constants(dataset)
    text = json.dumps(result.to_json_dict(), indent=2)
    print(text)
    _write_text(args.out, text + "\n")
    if args.plot:
        from .plots import plot_calibration

        plot_calibration(dataset, result, _figure_path(args.out))
    return 0


def _parse_isotope_or_fail(symbol: str) -> tuple[str, int]:
    m = _ISOTOPE_RE.match(symbol.strip())
    if not m:
        raise ValidationError(f"bad isotope symbol in grid: {symbol!r}")
    return m.group(2).capitalize(), int(m.group(1))


def _cmd_fetch(args) -> int:
    from .screening import FetchQuery, fetch_remote, load_client_config

    config = load_client_config(args.config)
    query = FetchQuery(
        min_gap_ev=args.min_gap,
        max_e_hull_ev=args.max_e_hull,
        elements=args.elements,
    )
    records = fetch_remote(query, config)
    payload = {
        "records": len(records),
        "cache_dir": config.cache_dir,
        "materials_dir": os.path.join(config.cache_dir, "materials"),
    }
    print(json.dumps(payload, indent=2))
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "predict": _cmd_predict,
    "screen": _cmd_screen,
    "periodic-table": _cmd_periodic_table,
    "decouple": _cmd_decouple,
    "calibrate": _cmd_calibrate,
    "fetch": _cmd_fetch,
}


def _raising_module(exc) -> str:
    """Innermost package module on the traceback; names where things failed."""
    module = "spinbath"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("spinbath."):
            module = name.rsplit(".", 1)[-1]
        tb = tb.tb_next
    return module


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spinbath {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except SpinbathError as exc:
        print(
            f"spinbath {args.command} [{_raising_module(exc)}] "
            f"{type(exc).__name__}: {exc}",
            file=sys.stderr,
        )
        return 2
    except OSError as exc:
        print(f"spinbath {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
