"""Graph-Laplacian spectral descriptors for point-cloud activity recognition.

The pipeline: load segmented point-cloud frames, build radius graphs per
body part, take the combinatorial Laplacian spectrum, turn it into
per-frame descriptors, aggregate over sliding windows, and classify with a
random forest or an RBF SVM under subject-independent splits.
"""

from .errors import (
    DataError,
    EigensolverError,
    EmptyFrameError,
    FrameFormatError,
    ManifestError,
    ModelFileError,
    NumericError,
    PipelineError,
    SplitError,
    StoreError,
    UsageError,
)
from .ingest import (
    AxisConvention,
    BoundingBox,
    FrameCloud,
    SequenceRecord,
    crop_to_bbox,
    load_frame,
    load_manifest,
    load_sequence_frames,
    save_manifest,
    write_frame,
)
from .graph import (
    DEFAULT_RADIUS_M,
    LaplacianMatrix,
    ProximityGraph,
    build_graph,
    connected_components,
    laplacian,
    write_edge_list,
)
from .spectrum import Spectrum, canonical_sign, decompose
from .partition import PART_IDS, PartSet, partition_frame
from .features import (
    FeatureConfig,
    FrameFeature,
    WindowFeature,
    aggregate_concat,
    aggregate_temporal_stats,
    eigenvalue_select,
    eigenvalue_summary,
    eigenvector_stats,
    extract_manifest,
    extract_sequence,
    window_feature,
)
from .store import FeatureStore, load_store
from .model import (
    PcaProjection,
    Scaler,
    TrainedModel,
    apply_scaler,
    fit_pca,
    fit_scaler,
    load_model,
    predict_scores,
    predict_top_k,
    project,
    save_model,
    train_random_forest,
    train_svm_rbf,
)
from .evaluate import (
    AblationCell,
    MetricReport,
    SplitSpec,
    compute_metrics,
    emit_confusion,
    run_ablation,
    split_records,
    split_store,
)
from .synth import SynthSpec, activity_roster, generate, mirror_pairs

__version__ = "0.1.0"
