from .alignment import (
    ALIGNMENT_TARGETS,
    AlignmentSample,
    PoolItem,
    SynthesisJob,
    assemble_alignment,
    compare_prompt,
    plan_alignment,
    read_pool,
    synthetic_fraction_for,
)
from .ingest import ingest, ingest_split, iter_records
from .manifest import (
    DatasetManifest,
    SplitCounts,
    SplitMismatch,
    check_splits,
    count_splits,
    find_manifests,
    load_manifest,
)
from .sft import build_sft, read_sft, sft_record, write_sft

__all__ = [
    "ALIGNMENT_TARGETS",
    "AlignmentSample",
    "DatasetManifest",
    "PoolItem",
    "SplitCounts",
    "SplitMismatch",
    "SynthesisJob",
    "assemble_alignment",
    "build_sft",
    "check_splits",
    "compare_prompt",
    "count_splits",
    "find_manifests",
    "ingest",
    "ingest_split",
    "iter_records",
    "load_manifest",
    "plan_alignment",
    "read_pool",
    "read_sft",
    "sft_record",
    "synthetic_fraction_for",
    "write_sft",
]
