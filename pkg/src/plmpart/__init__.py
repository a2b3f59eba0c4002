"""Partition-based estimation and testing for partially linear models.

``Y = X beta + g(Z) + eps`` is fit by grouping observations into small cells
along Z, sweeping out the cell means and running least squares on what is
left. ``g`` is then recovered by local polynomial smoothing of
``Y - X beta_hat``.
"""

from importlib import resources

from .data import Dataset
from .errors import (
    BandwidthTooSmall,
    DataError,
    EmptyData,
    GroupTooSmall,
    MissingColumn,
    NonNumericValue,
    PartitionError,
    PlmError,
    RankDeficientError,
    SingularGramError,
)
from .estimator import PlmFit, center_within_cells, covariance, fit, residualize
from .inference import (
    LinearHypothesis,
    SmootherConfig,
    TestReport,
    band_from_report,
    confidence_band,
    d_n,
    t1_test,
    t2_test,
)
from .io import ModelSpec, load_csv
from .partition import PartitionPlan, ZSpec, assign_cells, make_plan, order_observations
from .smoother import CurveEstimate, gcv_bandwidth, kernel_constants, local_poly_fit

__version__ = "0.1.0"


def sample_data_path():
    """Path of the bundled synthetic birth-weight CSV."""
    return resources.files(__name__) / "data" / "birthweight_synthetic.csv"


def schema_path():
    """Path of the JSON schema for CLI reports."""
    return resources.files(__name__) / "schemas" / "report.schema.json"
