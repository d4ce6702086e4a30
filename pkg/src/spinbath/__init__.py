"""Nuclear spin-bath decoherence toolkit.

Simulates Hahn-echo coherence of a defect electron spin in a nuclear spin
bath by cluster correlation expansion, distills the results into an algebraic
scaling law for T2, and screens crystal-structure corpora for long-coherence
hosts.
"""

from .bath import (
    BathInstance,
    BathSpin,
    ClusterSet,
    density_scaled_cutoffs,
    enumerate_clusters,
    partition_by_species,
    sample_lattice_bath,
    sample_random_bath,
)
from .cce import (
    RandomBathSpec,
    SimulationConfig,
    cce_curve,
    cluster_coherence,
    ensemble_coherence,
    hyperfine_vector,
    nuclear_dipolar_hamiltonian,
)
from .cif import parse_cif
from .crystal import (
    CrystalCell,
    Site,
    Supercell,
    build_supercell,
    min_interatomic_distance,
)
from .errors import (
    CalibrationError,
    ConfigurationError,
    DomainError,
    FetchError,
    FitError,
    FitRangeError,
    HomonuclearPairError,
    ParseError,
    PartialFetchError,
    SpinbathError,
    TableLookupError,
    UnsupportedOrderError,
    ValidationError,
)
from .fitting import (
    CoherenceCurve,
    PowerLawFit,
    T2Fit,
    fit_power_law,
    fit_stretched_exponential,
)
from .isotopes import (
    Isotope,
    IsotopeTable,
    isotope_densities,
    load_bundled_table,
    load_isotope_table,
)
from .scaling import (
    DEFAULT_CONSTANTS,
    UNBOUNDED,
    CalibrationResult,
    DecouplingEstimate,
    ScalingConstants,
    calibrate_constants,
    combination_error_bound_check,
    combine_t2,
    decoupling_field,
    element_table,
    t2_isotope,
)
from .screening import (
    ClientConfig,
    FetchQuery,
    MaterialRecord,
    ScreenFilters,
    ScreeningReport,
    T2Prediction,
    fetch_remote,
    load_client_config,
    load_corpus,
    predict_material,
    screen_corpus,
)

__version__ = "0.1.0"
