from enum import Enum, IntEnum

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11

    class StrEnum(str, Enum):
        """Backport of enum.StrEnum."""

        __str__ = str.__str__
        __format__ = str.__format__


class FileExt(StrEnum):
    """File extensions."""

    TENSOR = ".c3t"


class FileMode(StrEnum):
    """File open modes."""

    READ_BINARY = "rb"
    WRITE_BINARY = "wb"


class BlockId(StrEnum):
    """Denoiser pyramid stages, in forward order."""

    DOWN0 = "Down0"
    DOWN1 = "Down1"
    DOWN2 = "Down2"
    MID = "Mid"
    UP0 = "Up0"
    UP1 = "Up1"
    UP2 = "Up2"


C3_TARGET_BLOCKS: tuple[BlockId, ...] = (
    BlockId.DOWN0,
    BlockId.DOWN1,
    BlockId.DOWN2,
    BlockId.MID,
)
DOWN_BLOCKS: tuple[BlockId, ...] = (BlockId.DOWN0, BlockId.DOWN1, BlockId.DOWN2)
UP_BLOCKS: tuple[BlockId, ...] = (BlockId.UP0, BlockId.UP1, BlockId.UP2)
ALL_BLOCKS: tuple[BlockId, ...] = tuple(BlockId)


class HookMode(StrEnum):
    NONE = "None"
    C3 = "C3"
    FREEU = "FreeU"


class ScorerSource(StrEnum):
    LOCAL_PROXY = "LocalProxy"
    REMOTE = "Remote"


class Modifier(StrEnum):
    """Creativity-associated prompt adjectives, in sweep order."""

    CREATIVE = "creative"
    RARE = "rare"
    INNOVATIVE = "innovative"
    INGENIOUS = "ingenious"


class Preset(StrEnum):
    """Step regimes standing in for the distilled / full model families."""

    TURBO = "turbo"
    LIGHTNING4 = "lightning4"
    SDXL = "sdxl"


PRESET_STEPS: dict[Preset, int] = {
    Preset.TURBO: 1,
    Preset.LIGHTNING4: 4,
    Preset.SDXL: 25,
}
PRESET_TARGET_SUM: dict[Preset, float] = {
    Preset.TURBO: 1.0,
    Preset.LIGHTNING4: 0.6,
    Preset.SDXL: 0.6,
}


class SweepParam(StrEnum):
    CUTOFF = "cutoff"
    EPSILON = "epsilon"
    SCALE_SUM = "scale_sum"
    STEP_RANGE = "step_range"
    CFG = "cfg"


class Subcommand(StrEnum):
    GEN = "gen"
    ABLATE_BLOCKS = "ablate-blocks"
    ABLATE_FREQUENCY = "ablate-frequency"
    SELECT = "select"
    COMBINE = "combine"
    QUANT = "quant"
    SWEEP = "sweep"
    ABLATE_MODIFIER = "ablate-modifier"
    FREEU_COMPARE = "freeu-compare"
    TEMPLATE_SWEEP = "template-sweep"
    CFG_COMPARE = "cfg-compare"


class Variant(StrEnum):
    BASELINE = "baseline"
    HOOKED = "hooked"
    ALLBAND = "allband"
    LOWBAND = "lowband"
    C3 = "c3"
    FREEU = "freeu"


class CfgSetting(StrEnum):
    DEFAULT = "default"
    HIGH_CFG = "cfg"
    NEGATIVE = "neg"
    HIGH_CFG_NEGATIVE = "cfg+neg"


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 2
    SCORER_UNAVAILABLE = 3
    IO_ERROR = 4
    INVARIANT_VIOLATION = 5


class TensorFileSpec:
    """Binary layout of the C3TF tensor container."""

    MAGIC = b"C3TF"
    VERSION = 1
    HEADER_FMT = "<4sIB"
    DIM_FMT = "<I"
    PAYLOAD_DTYPE = "<f4"


class NoiseSchedule:
    """Fixed DDPM schedule the DDIM sampler subsamples."""

    BETA_START = 1e-4
    BETA_END = 0.02
    TRAIN_STEPS = 1000


class RngStreamId(IntEnum):
    """Disjoint stream ids for the seeded generators."""

    WEIGHTS = 1
    LATENT = 2
    DECODER = 3
    ALIGNMENT_EMBED = 5
    METRIC_EMBED = 6


class Tolerance:
    IMAG_RESIDUAL = 1e-4


class ScorerKeys(StrEnum):
    """Remote scorer wire-format keys."""

    ROUTE = "/score"
    CONCEPT = "concept"
    WIDTH = "width"
    HEIGHT = "height"
    PIXELS = "pixels_b64"
    AESTHETIC = "aesthetic"
    ALIGNMENT = "alignment"
    BLIP = "blip"


class SelectionKeys(StrEnum):
    BLOCK = "block"
    LAMBDA_STAR = "lambda_star"
    TRACE = "trace"


class ReportColumns:
    """Fixed CSV column orders."""

    METRICS = (
        "n_real",
        "n_fake",
        "k",
        "fid_star",
        "precision_star",
        "recall",
        "lpips_mean",
        "vendi",
        "alignment_mean",
    )
    GEN_INDEX = (
        "concept",
        "seed",
        "variant",
        "file",
        "aesthetic",
        "alignment",
        "usability",
    )
    ABLATE_BLOCKS = ("block", "lambda", "seed", "usability", "distance", "hbe")
    ABLATE_FREQUENCY = ("seed", "variant", "hbe", "usability")
    SELECT_SUMMARY = ("block", "K_l", "lambda_star", "baseline_use", "threshold")
    SWEEP = ("param", "value", "seed", "lambda_star", "usability", "distance", "hbe")
    ABLATE_MODIFIER = (
        "concept",
        "modifier",
        "c3",
        "n_images",
        "mean_usability",
        "fid_on_off_with_modifier",
        "fid_on_off_without_modifier",
    )
    FREEU_COMPARE = ("method", "b", "s", "seed", "usability", "distance", "hbe")
    TEMPLATE_SWEEP = ("modifier", "seed", "file", "usability")
    TEMPLATE_SUMMARY = ("modifier", "mean_usability", "pairwise_diversity")
    CFG_COMPARE = ("concept", "setting", "c3", "seed", "usability", "distance", "hbe")
    QUANT_REF = ("concept", "ref_concept", "fid_star", "precision_star", "recall")
    PLAIN_SPLIT = "fid_star_plain_split"


class PathName(StrEnum):
    CACHE_DIR = "c3_cache"
    OUT_DIR = "c3_runs"
    MANIFEST = "manifest.json"
    WEIGHT_MANIFEST = "manifest.json"
    INDEX_CSV = "index.csv"
    SELECTIONS_DIR = "selections"
    SELECT_SUMMARY = "lambda_star.csv"
    PROFILE = "profile.json"
    IMAGES_DIR = "images"
    LATENTS_DIR = "latents"
    REPORT_CSV = "report.csv"
    REPORT_JSON = "report.json"
    QUANT_REF_CSV = "real_to_ref.csv"
    SUMMARY_CSV = "summary.csv"
    PLOT_SVG = "plot.svg"


class MiscValues(StrEnum):
    NEGATIVE_TEMPLATE = "normal {concept}"
    AGGREGATE_MEAN = "mean"
    AGGREGATE_STD = "std"


class FormatStrings(StrEnum):
    """String templates for formatting."""

    ENCODING_UTF8 = "utf-8"
    ENCODING_ERRORS_REPLACE = "replace"
    TRUNCATION_SUFFIX = "..."
    IMAGE_FILE = "{concept}_s{seed:04d}_{variant}.ppm"
    LATENT_FILE = "{concept}_s{seed:04d}_{variant}.c3t"
    ABLATE_FILE = "{block}_l{lam:g}_s{seed:04d}.ppm"
    SELECTION_FILE = "{block}.json"
    TIMESTAMP_ISO_SECONDS = "seconds"
    CSV_FLOAT = "%.6g"


class LogMsg(StrEnum):
    """Log message templates."""

    UNEXPECTED_ERROR = "Unexpected error: {error}"
    LOG_MISSING_FORMAT_KEY = "Missing key '{key}' in kwargs for log message: {template}"

    CONFIG_LOADED = "Loaded experiment config from {path} (hash {config_hash})."
    CONFIG_OVERRIDE = "Override {key} = {value}"
    CONFIG_BAD_OVERRIDE = "Malformed --set override '{item}', expected key=value."
    CONFIG_INVALID = "Invalid experiment config: {error}"
    CONFIG_NON_POSITIVE = "{field} must be positive, got {value}"
    CONFIG_OUT_OF_RANGE = "{field} must lie in [{low}, {high}], got {value}"
    CONFIG_LATENT_TOO_SMALL = (
        "latent_size must be a power of two >= {minimum} so three stride-2 downsamples leave Mid at least 2x2, got {value}"
    )
    CONFIG_NOT_EVEN = "{field} must be even, got {value}"
    CONFIG_BAD_GRID = "Search grid for {block} must start at 1, be strictly increasing and hold >= 2 values: {values}"
    CONFIG_BAD_STEP_RANGE = "step_range {step_range} must lie within [0, {last}] with start <= end"
    CONFIG_EMPTY_CONCEPT = "Conditioning concept must be nonempty."
    CONFIG_UNKNOWN_PRESET = "Unknown preset '{preset}'."

    TENSOR_SAVED = "Saved tensor {dims} to {path}."
    TENSOR_LOADED = "Loaded tensor {dims} from {path}."
    TENSOR_BAD_MAGIC = "Bad magic {magic!r} at byte offset {offset}"
    TENSOR_BAD_VERSION = "Unsupported version {version} at byte offset {offset}"
    TENSOR_TRUNCATED = "Truncated tensor file: expected {expected} bytes from offset {offset}, found {found}"
    TENSOR_TRAILING = "Trailing bytes in tensor file: expected {expected} payload bytes from offset {offset}, found {found}"
    TENSOR_RANK = "Expected a rank-{expected} tensor, file holds rank {rank}"
    DIM_NOT_POW2 = "Spatial dims must be powers of two >= 2, got {height}x{width}"
    DIM_MISMATCH = "Dimension mismatch: {left} vs {right}"
    NON_FINITE = "Feature map contains non-finite values"
    SYMMETRY_VIOLATION = "Inverse transform left imaginary residual {residual:.3e} above tolerance {tolerance:.3e}"
    CUTOFF_OUT_OF_RANGE = "Cutoff ratio must lie in [0, 1], got {rho}"
    LAMBDA_INVALID = "Amplification factor must be finite and >= 0, got {value}"

    MODEL_BUILT = "Built toy denoiser (weight_seed={seed}, latent {channels}x{size}x{size})."
    WEIGHTS_EXPORTED = "Exported {count} weight tensors to {path}."
    WEIGHTS_IMPORTED = "Imported {count} weight tensors from {path}."
    WEIGHTS_SHAPE_MISMATCH = "Weight {name} has shape {found}, expected {expected}"
    LATENT_SHAPE_MISMATCH = "Latent shape {found} does not match config {expected}"
    STEP_INDEX_OUT_OF_RANGE = "step_index {step_index} must lie in [0, {steps})"
    SAMPLE_DONE = "Sampled seed {seed} ({steps} steps, mode {mode})."

    SEARCH_START = "Searching lambda for {block} over {count} grid points (epsilon={epsilon})."
    SEARCH_POINT = "{block} lambda={lam:g}: mean usability {use:.4f} (threshold {threshold:.4f}, feasible={feasible})"
    SEARCH_DONE = "Selected lambda*={lam:g} for {block}."
    COMBINE_DONE = "Combined {count} blocks with target sum {target_sum:g}."
    COMBINE_BAD_WEIGHT = "Combination weight for {block} must be positive, got {weight}"
    COMBINE_MISSING_WEIGHT = "No combination weight for selected block {block}"
    COMBINE_EMPTY = "Cannot combine an empty selection list"

    SCORER_REQUEST = "Scoring {concept} at {endpoint}."
    SCORER_RETRY = "Remote scorer attempt {attempt} failed ({error}); retrying."
    SCORER_UNAVAILABLE = "Remote scorer at {endpoint} unavailable after {attempts} attempts: {error}"
    SCORER_PROTOCOL = "Malformed scorer response from {endpoint}: {error}"
    SCORER_FALLBACK = "Falling back to local proxy scorers: {error}"
    SCORER_CACHE_HIT = "Remote score cache hit for {concept}."
    CACHE_CLEARED = "Scorer endpoint changed from {old} to {new}: clearing disk cache."
    BASELINE_MISSING = "Usability context has no baseline image"

    METRICS_TOO_FEW = "Need more than k={k} points per set, got {n_real} real and {n_fake} fake"
    METRICS_TOO_FEW_IMAGES = "Need at least {minimum} images, got {count}"
    METRICS_DONE = "Metrics for {n_fake} images: fid*={fid:.4f} precision*={precision:.3f} recall={recall:.3f}"

    EXPERIMENT_START = "Running {command} into {out_dir}."
    EXPERIMENT_DONE = "{command} wrote {count} files (manifest {manifest})."
    EXPERIMENT_IO_FAIL = "I/O failure while writing {path}: {error}"
    SELECTION_MISSING = "Selection file {path} not found; run select first."
    PROFILE_MISSING = "Profile file {path} not found."
    INSUFFICIENT_SEEDS = "quant needs seeds >= k + 2 = {needed}, got {seeds}"
    UNKNOWN_SWEEP_PARAM = "Unknown sweep parameter '{param}'."
    BAD_SWEEP_VALUE = "Cannot parse sweep value '{value}' for {param}."
    INVARIANT_BROKEN = "Invariant violated: {detail}"
