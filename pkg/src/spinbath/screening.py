"""Batch materials screening.

Ingests structure corpora (local JSON records or a paged HTTP API), predicts
the nuclear-bath T2 of every material through the scaling law, filters by
bandgap and thermodynamic stability, and emits a ranked report. The scaling
law is the engine here; cluster simulations are for spot checks, not for
twelve thousand materials.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field

from .cif import parse_cif
from .errors import (
    ConfigurationError,
    FetchError,
    ParseError,
    PartialFetchError,
    SpinbathError,
    ValidationError,
)
from .isotopes import IsotopeTable, isotope_densities
from .scaling import (
    DEFAULT_CONSTANTS,
    UNBOUNDED,
    ScalingConstants,
    combine_t2,
    t2_isotope,
)

logger = logging.getLogger(__name__)

_RECORD_KEYS = ("material_id", "formula", "band_gap_eV", "energy_above_hull_eV", "cif")

UNBOUNDED_FLAG = "no_spinful_isotopes"


@dataclass(frozen=True)
class MaterialRecord:
    """One corpus entry: structure text plus electronic-structure metadata."""

    material_id: str
    formula: str
    cif_text: str
    band_gap_ev: float
    energy_above_hull_ev: float

    def __post_init__(self):
        if self.band_gap_ev < 0:
            raise ValidationError(
                f"{self.material_id}: band gap must be non-negative, "
                f"got {self.band_gap_ev}"
            )
        if self.energy_above_hull_ev < 0:
            raise ValidationError(
                f"{self.material_id}: energy above hull must be non-negative, "
                f"got {self.energy_above_hull_ev}"
            )

    def to_json_dict(self) -> dict:
        return {
            "material_id": self.material_id,
            "formula": self.formula,
            "band_gap_eV": self.band_gap_ev,
            "energy_above_hull_eV": self.energy_above_hull_ev,
            "cif": self.cif_text,
        }


def _record_from_json(obj) -> MaterialRecord:
    if not isinstance(obj, dict):
        raise ValidationError("record is not a JSON object")
    missing = [k for k in _RECORD_KEYS if k not in obj]
    if missing:
        raise ValidationError(f"record missing keys: {', '.join(missing)}")
    for key in ("material_id", "formula", "cif"):
        if not isinstance(obj[key], str):
            raise ValidationError(f"record key {key} must be a string")
    for key in ("band_gap_eV", "energy_above_hull_eV"):
        if not isinstance(obj[key], (int, float)) or isinstance(obj[key], bool):
            raise ValidationError(f"record key {key} must be a number")
    return MaterialRecord(
        material_id=obj["material_id"],
        formula=obj["formula"],
        cif_text=obj["cif"],
        band_gap_ev=float(obj["band_gap_eV"]),
        energy_above_hull_ev=float(obj["energy_above_hull_eV"]),
    )


@dataclass(frozen=True)
class CorpusLoad:
    """Result of reading a corpus directory: what loaded and what did not."""

    records: tuple
    skipped: tuple  # (filename, reason) pairs


def load_corpus(path: str) -> CorpusLoad:
    """Read every .json record under a directory.

    Invalid files go to the skip report instead of aborting the load. When two
    files carry the same material_id the one later in sorted filename order
    wins and a warning is logged.
    """
    names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
    by_id: dict[str, MaterialRecord] = {}
    skipped = []
    for name in names:
        full = os.path.join(path, name)
        try:
            with open(full, encoding="utf-8") as fh:
                obj = json.load(fh)
            record = _record_from_json(obj)
        except (OSError, ValueError) as exc:
            skipped.append((name, str(exc)))
            continue
        if record.material_id in by_id:
            logger.warning(
                "duplicate material_id %r: %s overrides an earlier file",
                record.material_id,
                name,
            )
        by_id[record.material_id] = record
    if not by_id and not skipped:
        logger.warning("corpus directory %s contains no records", path)
    return CorpusLoad(records=tuple(by_id.values()), skipped=tuple(skipped))


@dataclass(frozen=True)
class T2Prediction:
    """Scaling-law T2 for one material, with the per-isotope breakdown."""

    material_id: str
    per_isotope: dict  # "13C" -> seconds
    combined: object  # seconds, or UNBOUNDED when no isotope carries spin

    @property
    def unbounded(self) -> bool:
        return self.combined is UNBOUNDED


def predict_material(
    record: MaterialRecord,
    table: IsotopeTable,
    constants: ScalingConstants = DEFAULT_CONSTANTS,
) -> T2Prediction:
    """Parse the record's structure and chain it through the scaling law.

    Combination uses the quadrature rule (every exponent 2), the same
    convention the ranked reports assume.
    """
    try:
        cell = parse_cif(record.cif_text)
    except ParseError as exc:
        raise ParseError(f"{record.material_id}: {exc}") from exc
    element_densities = cell.element_densities()
    per_isotope = {}
    components = []
    for isotope, n_i in isotope_densities(table, element_densities):
        t2 = t2_isotope(isotope.g_factor, isotope.spin, n_i, constants)
        per_isotope[str(isotope)] = t2
        components.append((t2, 2.0))
    return T2Prediction(
        material_id=record.material_id,
        per_isotope=per_isotope,
        combined=combine_t2(components, eta_prime=2.0),
    )


@dataclass(frozen=True)
class ScreenFilters:
    """Thresholds applied before prediction (gap, hull) and after (min T2)."""

    min_gap_ev: float = 1.0
    max_e_hull_ev: float = 0.0
    min_t2_s: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "min_gap_eV": self.min_gap_ev,
            "max_e_hull_eV": self.max_e_hull_ev,
            "min_t2_s": self.min_t2_s,
        }


@dataclass(frozen=True)
class ScreeningRow:
    material_id: str
    formula: str
    t2: object  # seconds, or UNBOUNDED
    flag: str  # "" or UNBOUNDED_FLAG
    band_gap_ev: float
    per_isotope: dict


@dataclass(frozen=True)
class ScreeningReport:
    rows: tuple
    filters_applied: ScreenFilters
    corpus_hash: str
    skipped: tuple = field(default_factory=tuple)  # (material_id, reason)

    def to_csv(self) -> str:
        lines = ["rank,material_id,formula,t2_s,flag,band_gap_eV"]
        for rank, row in enumerate(self.rows, start=1):
            t2_text = "UNBOUNDED" if row.t2 is UNBOUNDED else repr(row.t2)
            lines.append(
                f"{rank},{row.material_id},{row.formula},{t2_text},"
                f"{row.flag},{repr(row.band_gap_ev)}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "filters": self.filters_applied.to_json_dict(),
            "corpus_hash": self.corpus_hash,
            "rows": [
                {
                    "rank": rank,
                    "material_id": row.material_id,
                    "formula": row.formula,
                    "t2_s": "UNBOUNDED" if row.t2 is UNBOUNDED else row.t2,
                    "flag": row.flag,
                    "band_gap_eV": row.band_gap_ev,
                    "per_isotope_t2_s": dict(row.per_isotope),
                }
                for rank, row in enumerate(self.rows, start=1)
            ],
            "skipped": [list(pair) for pair in self.skipped],
        }


def _corpus_digest(records) -> str:
    canonical = json.dumps(
        sorted((r.to_json_dict() for r in records), key=lambda d: d["material_id"]),
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _row_sort_key(row: ScreeningRow):
    # Spin-free hosts outrank every finite lifetime.
    if row.t2 is UNBOUNDED:
        return (0, 0.0, row.material_id)
    return (1, -row.t2, row.material_id)


def screen_corpus(
    records,
    table: IsotopeTable,
    constants: ScalingConstants = DEFAULT_CONSTANTS,
    filters: ScreenFilters = ScreenFilters(),
) -> ScreeningReport:
    """Filter, predict, and rank a corpus.

    Output is a pure function of (records, table, constants, filters): rows
    sort by combined T2 descending with unbounded hosts first and ties broken
    by material_id. Materials whose structure fails to parse land in the skip
    report rather than aborting the run.
    """
    rows = []
    skipped = []
    for record in records:
        if record.band_gap_ev < filters.min_gap_ev:
            continue
        if record.energy_above_hull_ev > filters.max_e_hull_ev:
            continue
        try:
            prediction = predict_material(record, table, constants)
        except SpinbathError as exc:
            skipped.append((record.material_id, str(exc)))
            continue
        if prediction.unbounded:
            flag = UNBOUNDED_FLAG
        else:
            flag = ""
            if filters.min_t2_s is not None and prediction.combined < filters.min_t2_s:
                continue
        rows.append(
            ScreeningRow(
                material_id=record.material_id,
                formula=record.formula,
                t2=prediction.combined,
                flag=flag,
                band_gap_ev=record.band_gap_ev,
                per_isotope=prediction.per_isotope,
            )
        )
    rows.sort(key=_row_sort_key)
    return ScreeningReport(
        rows=tuple(rows),
        filters_applied=filters,
        corpus_hash=_corpus_digest(records),
        skipped=tuple(skipped),
    )


@dataclass(frozen=True)
class FetchQuery:
    """Server-side filter spec for the remote corpus API."""

    min_gap_ev: float = 1.0
    max_e_hull_ev: float = 0.0
    elements: tuple | None = None  # restrict to materials within this element set

    def to_params(self, page: int) -> dict:
        params = {
            "min_gap": repr(self.min_gap_ev),
            "max_e_hull": repr(self.max_e_hull_ev),
            "page": str(page),
        }
        if self.elements is not None:
            params["elements"] = ",".join(sorted(self.elements))
        return params

    def digest(self) -> str:
        canonical = json.dumps(
            {
                "min_gap": self.min_gap_ev,
                "max_e_hull": self.max_e_hull_ev,
                "elements": sorted(self.elements) if self.elements is not None else None,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    cache_dir: str = "cache"


def load_client_config(path: str) -> ClientConfig:
    """Parse a key=value config file.

    Recognized keys: matdb.base_url (required), cache.dir (optional). Blank
    lines and #-comments are ignored; unknown keys are an error so typos do
    not silently fall back to defaults.
    """
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected key=value, got {line!r}"
                )
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key in values:
                raise ConfigurationError(f"{path}:{lineno}: duplicate key {key!r}")
            if key not in ("matdb.base_url", "cache.dir"):
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    if "matdb.base_url" not in values:
        raise ConfigurationError(f"{path}: missing required key matdb.base_url")
    return ClientConfig(
        base_url=values["matdb.base_url"].rstrip("/"),
        cache_dir=values.get("cache.dir", "cache"),
    )


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(path)
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cached_records(config: ClientConfig, query: FetchQuery):
    manifest_path = os.path.join(config.cache_dir, "queries", query.digest() + ".json")
    if not os.path.exists(manifest_path):
        return None
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    records = []
    for material_id in manifest["material_ids"]:
        record_path = os.path.join(config.cache_dir, "materials", material_id + ".json")
        if not os.path.exists(record_path):
            return None  # cache was pruned; refetch the whole query
        with open(record_path, encoding="utf-8") as fh:
            records.append(_record_from_json(json.load(fh)))
    return records


def fetch_remote(
    query: FetchQuery,
    config: ClientConfig,
    *,
    session=None,
    sleep=time.sleep,
    max_attempts: int = 3,
):
    """Page through the remote materials API and mirror results to the cache.

    Requires MATDB_API_KEY in the environment (bearer token). A query seen
    before is answered from the cache without touching the network. Transient
    failures are retried with exponential backoff; a page that stays down
    raises PartialFetchError carrying everything that did arrive (already
    cached, so a later retry is cheap).
    """
    cached = _cached_records(config, query)
    if cached is not None:
        return cached

    api_key = os.environ.get("MATDB_API_KEY")
    if not api_key:
        raise ConfigurationError(
            "environment variable MATDB_API_KEY is not set; it must hold the "
            "materials-database API token"
        )
    if session is None:
        import requests

        session = requests.Session()
    headers = {"Authorization": f"Bearer {api_key}"}
    url = config.base_url + "/materials"

    records = []
    page = 1
    while page is not None:
        payload = None
        failure = None
        for attempt in range(max_attempts):
            if attempt:
                sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = session.get(
                    url, params=query.to_params(page), headers=headers, timeout=30
                )
            except Exception as exc:  # requests' exception zoo, socket errors
                failure = str(exc)
                continue
            if response.status_code in (401, 403):
                raise FetchError(
                    f"authentication rejected (HTTP {response.status_code}); "
                    "check MATDB_API_KEY"
                )
            if response.status_code != 200:
                failure = f"HTTP {response.status_code}"
                continue
            try:
                payload = response.json()
            except ValueError as exc:
                failure = f"invalid JSON: {exc}"
                continue
            break
        if payload is None:
            # Pagination is sequential, so everything past this page is lost.
            _write_query_manifest(config, query, records, partial=True)
            raise PartialFetchError(
                f"page {page} failed after {max_attempts} attempts ({failure})",
                failed_pages=[page],
                records=records,
            )
        for obj in payload.get("results", []):
            record = _record_from_json(obj)
            _write_atomic(
                os.path.join(config.cache_dir, "materials", record.material_id + ".json"),
                json.dumps(record.to_json_dict(), indent=1),
            )
            records.append(record)
        page = payload.get("next_page")

    _write_query_manifest(config, query, records, partial=False)
    return records


def _write_query_manifest(config, query, records, partial: bool):
    # A partial manifest must not satisfy future cache lookups.
    if partial:
        return
    manifest = {
        "query": {
            "min_gap": query.min_gap_ev,
            "max_e_hull": query.max_e_hull_ev,
            "elements": sorted(query.elements) if query.elements is not None else None,
        },
        "material_ids": [r.material_id for r in records],
    }
    _write_atomic(
        os.path.join(config.cache_dir, "queries", query.digest() + ".json"),
        json.dumps(manifest, indent=1),
    )
