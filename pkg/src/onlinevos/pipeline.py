"""Online segmentation engine.

Frame 0: build each object's initial sample set by augmentation, fit its
target model with Gauss-Newton over both layers and calibrate the output
head.  Every later frame: extract features once, score each object, map the
scores to probabilities with the D-only head (bilinear upsampling, learned
scale and offset, sigmoid), fuse the objects, append the frame to every
object's memory and, every ``t_s`` frames, refit the second layer.
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .augmentation import AugmentationConfig, generate_initial_set
from .errors import DimensionError, InputError
from .features import STRIDE, FeatureSpec, ToyFeatureProvider
from .memory import SampleMemory
from .objective import prepare_label
from .optimizer import OptimizerConfig, optimize
from .target_model import BOTH, W2_ONLY, ModelConfig, forward, init_params
from .tensor_ops import upsample_bilinear

log = logging.getLogger(__name__)

OURS = "ours"
FAST = "fast"
CUSTOM = "custom"

PRESETS = {
    OURS: dict(c=96, t_s=8, n_gn=5, n_cgi=5, n_cg=10, n_cgu=10),
    FAST: dict(c=32, t_s=16, n_gn=4, n_cgi=5, n_cg=10, n_cgu=5),
}

AGGREGATION_EPS = 1e-5
REFERENCE_CHANNELS = 1024  # backbone width the preset c values are sized for


@dataclass(frozen=True)
class EngineConfig:
    """Inference-loop settings.

    ``t_s=None`` disables model updates.  ``c`` is the requested projection
    width; see :meth:`effective_c` for how it adapts to the feature width.
    ``memory_labels`` selects whether stored frame labels are the soft
    probability maps or their thresholded masks.
    """

    mode: str = OURS
    t_s: int = 8
    eta: float = 0.1
    k_max: int = 80
    kappa_min: float = 0.1
    c: int = 96
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    init_seed: int = 0
    binarize_threshold: float = 0.5
    memory_labels: str = "binary"

    def __post_init__(self):
        if self.mode not in (OURS, FAST, CUSTOM):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode in PRESETS:
            pre = PRESETS[self.mode]
            opt = self.optimizer
            actual = dict(c=self.c, n_gn=opt.n_gn, n_cgi=opt.n_cgi, n_cg=opt.n_cg, n_cgu=opt.n_cgu)
            if self.t_s is not None:
                actual["t_s"] = self.t_s
            bad = {k: v for k, v in actual.items() if v != pre[k]}
            if bad:
                raise ValueError(f"mode {self.mode!r} fixes {bad} to {[pre[k] for k in bad]}")
        if self.t_s is not None and self.t_s < 1:
            raise ValueError(f"t_s must be >= 1 or None, got {self.t_s}")
        if self.memory_labels not in ("soft", "binary"):
            raise ValueError(f"memory_labels must be 'soft' or 'binary', got {self.memory_labels!r}")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if not 0.0 < self.eta < 1.0 or self.k_max < 1 or not 0.0 < self.kappa_min < 1.0:
            raise ValueError("eta and kappa_min must lie in (0, 1) and k_max be positive")

    @classmethod
    def preset(cls, mode=OURS, **overrides):
        """Configuration for ``mode`` ('ours' or 'fast') with optional non-preset overrides."""
        pre = PRESETS[mode]
        opt_kw = {k: pre[k] for k in ("n_gn", "n_cgi", "n_cg", "n_cgu")}
        opt_kw.update(overrides.pop("optimizer_overrides", {}))
        opt = OptimizerConfig(**opt_kw)
        kw = dict(mode=mode, t_s=pre["t_s"], c=pre["c"], optimizer=opt)
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def from_run_config(cls, rc, no_update=False):
        """Build from a parsed :class:`~onlinevos.io.RunConfig`."""
        opt_fields = dict(n_gn=rc.n_gn, n_cgi=rc.n_cgi, n_cg=rc.n_cg, n_cgu=rc.n_cgu)
        base = dict(c=rc.c, t_s=rc.t_s, **opt_fields)
        if rc.mode in PRESETS:
            pre = PRESETS[rc.mode]
            bad = {k: v for k, v in base.items() if v is not None and v != pre[k]}
            if bad:
                raise InputError(f"mode {rc.mode!r} fixes {sorted(bad)}; use mode=custom to change them")
            vals = dict(pre)
        else:
            missing = [k for k, v in base.items() if v is None]
            if missing:
                raise InputError(f"mode 'custom' requires {missing}")
            vals = base
        opt = OptimizerConfig(n_gn=vals["n_gn"], n_cgi=vals["n_cgi"], n_cg=vals["n_cg"],
                              n_cgu=vals["n_cgu"], lambdas=(rc.lambda1, rc.lambda2),
                              kappa_min=rc.kappa_min, pixel_weight_rule=rc.pixel_weight_rule)
        return cls(mode=rc.mode, t_s=None if no_update else vals["t_s"], eta=rc.eta,
                   k_max=rc.k_max, kappa_min=rc.kappa_min, c=vals["c"], optimizer=opt,
                   augmentation=AugmentationConfig(seed=rc.seed), init_seed=rc.seed)

    def without_updates(self):
        return replace(self, t_s=None)

    def effective_c(self, feature_channels):
        """Reduced channel count for ``feature_channels`` input channels.

        Preset values of ``c`` are sized for 1024-channel backbone features and
        shrink proportionally for narrower inputs (64 toy channels give 6 and 2).
        A custom ``c`` is only clamped.
        """
        if self.mode in PRESETS and feature_channels < REFERENCE_CHANNELS:
            return max(1, round(self.c * feature_channels / REFERENCE_CHANNELS))
        return min(self.c, feature_channels)

    def model_config(self, feature_channels, object_index=0):
        return ModelConfig(feature_channels, self.effective_c(feature_channels),
                           self.init_seed + object_index)


@dataclass
class ObjectState:
    object_id: int
    params: object
    memory: SampleMemory
    calibration: tuple = (1.0, 0.0)


@dataclass
class OutputMask:
    """Fused prediction for one frame.

    ``probabilities[i]`` is the normalized probability of ``object_ids[i]``;
    ``labels`` holds object ids, 0 for background.
    """

    object_ids: list
    probabilities: np.ndarray
    background: np.ndarray
    labels: np.ndarray


# --------------------------------------------------------------------------
# output head

def predict_coarse(state, features):
    """Stride-16 score map ``(h, w)`` of one object."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != state.params.feature_channels:
        raise DimensionError(f"features {x.shape} do not match the model's "
                             f"{state.params.feature_channels} channels")
    return forward(state.params, x)[0]


def refine_d_only(state, s, image_size=None):
    """``sigmoid(scale * U16(s) + offset)``, cropped to ``image_size`` (H, W)."""
    scale, offset = state.calibration
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 3:
        s = s[0]
    up = upsample_bilinear(s, STRIDE)
    if image_size is not None:
        up = up[:image_size[0], :image_size[1]]
    return expit(scale * up + offset)


def calibration_loss(scale, offset, u, y):
    z = scale * u + offset
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


NEWTON = "newton"
GRADIENT = "gradient"


def fit_calibration(s_first, y_first, iterations=100, step=0.1, history=None, method=NEWTON):
    """Fit ``(scale, offset)`` of the output sigmoid to the first-frame label.

    Minimizes the pixel-mean binary cross-entropy starting at ``(1, 0)``.
    ``method='newton'`` takes damped Newton steps on the 2-parameter convex
    problem (backtracking until the loss decreases), which reaches the
    minimizer in a few iterations.  ``method='gradient'`` runs plain gradient
    descent with a fixed ``step``; on imbalanced masks it barely moves the
    threshold within 100 iterations.

    If ``history`` is a list, the loss before every iteration and after the
    last one is appended to it.
    """
    if method not in (NEWTON, GRADIENT):
        raise ValueError(f"unknown calibration method {method!r}")
    y = np.asarray(y_first, dtype=np.float64)
    if y.ndim == 3:
        y = y[0]
    s = np.asarray(s_first, dtype=np.float64)
    if s.ndim == 3:
        s = s[0]
    u = upsample_bilinear(s, STRIDE)[:y.shape[0], :y.shape[1]]
    if u.shape != y.shape:
        raise DimensionError(f"upsampled scores {u.shape} do not cover label {y.shape}")
    theta = np.array([1.0, 0.0])
    loss = calibration_loss(theta[0], theta[1], u, y)
    for _ in range(iterations):
        if history is not None:
            history.append(loss)
        p = expit(theta[0] * u + theta[1])
        g = p - y
        grad = np.array([np.mean(g * u), np.mean(g)])
        if method == GRADIENT:
            theta = theta - step * grad
            loss = calibration_loss(theta[0], theta[1], u, y)
            continue
        w = p * (1.0 - p)
        hess = np.array([[np.mean(w * u * u), np.mean(w * u)], [np.mean(w * u), np.mean(w)]])
        hess += 1e-12 * np.eye(2) * max(1.0, np.trace(hess))
        direction = np.linalg.solve(hess, grad)
        t = 1.0
        for _ in range(40):
            cand = theta - t * direction
            cand_loss = calibration_loss(cand[0], cand[1], u, y)
            if cand_loss < loss:
                break
            t *= 0.5
        else:
            break
        theta, loss = cand, cand_loss
        if np.linalg.norm(grad) < 1e-10:
            break
    if history is not None:
        history.append(loss)
    return float(theta[0]), float(theta[1])


def aggregate_multi_object(probabilities, object_ids=None, eps=AGGREGATION_EPS):
    """Softmax-style fusion of per-object probabilities through their odds."""
    probs = [np.asarray(p, dtype=np.float64) for p in probabilities]
    if not probs:
        raise InputError("at least one probability map is required")
    shape = probs[0].shape
    for p in probs:
        if p.shape != shape:
            raise DimensionError(f"probability maps differ in size: {p.shape} vs {shape}")
    odds = np.empty((len(probs) + 1,) + shape)
    q = np.clip(np.stack(probs), eps, 1.0 - eps, out=odds[1:])
    bg = np.prod(1.0 - q, axis=0)
    np.divide(q, 1.0 - q, out=odds[1:])
    np.divide(bg, 1.0 - bg, out=odds[0])
    norm = np.divide(odds, odds.sum(axis=0), out=odds)
    # argmax with ties to the lowest index; a loop over objects beats a strided argmax
    winner = np.zeros(shape, dtype=np.intp)
    best = norm[0].copy()
    for i in range(1, len(norm)):
        better = norm[i] > best
        winner[better] = i
        np.maximum(best, norm[i], out=best)
    ids = list(object_ids) if object_ids is not None else list(range(1, len(probs) + 1))
    lut = np.array([0] + ids)
    return OutputMask(ids, norm[1:], norm[0], lut[winner])


# --------------------------------------------------------------------------
# engine

def _pad_to_stride(image):
    _, h, w = image.shape
    ph, pw = -h % STRIDE, -w % STRIDE
    if ph == 0 and pw == 0:
        return image
    return np.pad(image, ((0, 0), (0, ph), (0, pw)), mode="edge")


def _pad_label(y, shape):
    out = np.zeros(shape)
    out[:y.shape[0], :y.shape[1]] = y
    return out


def _normalize_masks(first_masks, shape):
    """Accept a label map with object ids or a list of binary masks."""
    if isinstance(first_masks, np.ndarray) and first_masks.ndim == 2:
        ids = [int(i) for i in np.unique(first_masks) if i != 0]
        masks = [(first_masks == i).astype(np.float64) for i in ids]
    else:
        masks = [np.asarray(m, dtype=np.float64) for m in first_masks]
        ids = list(range(1, len(masks) + 1))
    if not masks:
        raise InputError("at least one annotated object is required")
    total = np.zeros(shape)
    for oid, m in zip(ids, masks):
        if m.shape != shape:
            raise InputError(f"mask for object {oid} has size {m.shape}, image is {shape}")
        if not ((m == 0) | (m == 1)).all():
            raise InputError(f"mask for object {oid} is not binary")
        if not m.any() or m.all():
            raise InputError(f"mask for object {oid} is degenerate")
        total += m
    if total.max() > 1:
        raise InputError("object masks overlap")
    return ids, masks


class SegmentationEngine:
    """Stateful, strictly causal segmentation of one sequence.

    Parameters
    ----------
    cfg : EngineConfig
    provider : callable, optional
        ``provider(image, frame_index=None) -> (C, H/16, W/16)`` features.
        Defaults to the toy extractor with 64 channels.
    sink : callable, optional
        Receives deterministic diagnostic records (dicts).
    refiner : callable, optional
        ``refiner(state, s) -> probability map`` at padded image resolution.
        Defaults to :func:`refine_d_only`.
    """

    def __init__(self, cfg=None, provider=None, sink=None, refiner=None):
        self.cfg = cfg or EngineConfig()
        self.provider = provider or ToyFeatureProvider(FeatureSpec())
        self.refiner = refiner or refine_d_only
        self.sink = sink
        self.states = []
        self.frame_index = -1
        self.image_size = None
        self.optimize_seconds = 0.0

    def _emit(self, record):
        if self.sink is not None:
            self.sink(record)

    def _optimize(self, state, layers, schedule, frame):
        def gn_sink(rec):
            self._emit(dict(event="gn_step", frame=frame, object=state.object_id, **rec))
        t0 = time.perf_counter()
        params = optimize(state.params, state.memory.snapshot(), self.cfg.optimizer, layers,
                          schedule, gn_sink)
        self.optimize_seconds += time.perf_counter() - t0
        return params

    def _label_system(self, label, on_degenerate="raise"):
        opt = self.cfg.optimizer
        return prepare_label(label, STRIDE, opt.kappa_min, opt.pixel_weight_rule, on_degenerate,
                             self.cfg.binarize_threshold)

    def initialize(self, first_image, first_masks):
        """Fit one target model per object on frame 0; returns the frame-0 output."""
        img = np.asarray(first_image, dtype=np.float64)
        if img.ndim != 3:
            raise InputError(f"image must be (3, H, W), got {img.shape}")
        self.image_size = img.shape[1:]
        ids, masks = _normalize_masks(first_masks, self.image_size)
        padded = _pad_to_stride(img)
        x0 = self.provider(padded, frame_index=0)
        channels = x0.shape[0]
        augment = getattr(self.provider, "supports_augmentation", True)
        self.states = []
        for k, (oid, m) in enumerate(zip(ids, masks)):
            y0 = _pad_label(m, padded.shape[1:])
            if augment and self.cfg.augmentation.count > 1:
                pairs = generate_initial_set(padded, y0, self.cfg.augmentation)
            else:
                pairs = [(padded, y0)]
            samples, systems = [], []
            for j, (aug_img, aug_y) in enumerate(pairs):
                feats = x0 if j == 0 else self.provider(aug_img)
                samples.append((np.asarray(feats, dtype=np.float32), aug_y.astype(np.float32)))
                systems.append(self._label_system(aug_y))
            memory = SampleMemory.init_from_initial_set(samples, 0, self.cfg.k_max, self.cfg.eta,
                                                        systems)
            params = init_params(self.cfg.model_config(channels, k))
            state = ObjectState(oid, params, memory)
            state.params = self._optimize(state, BOTH, self.cfg.optimizer.schedule(), 0)
            state.calibration = fit_calibration(forward(state.params, x0), y0)
            self._emit(dict(event="init", frame=0, object=oid, samples=len(memory),
                            scale=state.calibration[0], offset=state.calibration[1]))
            self.states.append(state)
        self.frame_index = 0
        probs = np.stack(masks)
        labels = np.zeros(self.image_size, dtype=np.int64)
        for oid, m in zip(ids, masks):
            labels[m > 0] = oid
        return OutputMask(ids, probs, 1.0 - probs.sum(axis=0), labels)

    def step(self, image):
        """Segment the next frame and update the object models."""
        if not self.states:
            raise InputError("engine is not initialized")
        img = np.asarray(image, dtype=np.float64)
        if img.shape[1:] != tuple(self.image_size):
            raise DimensionError(f"frame size {img.shape[1:]} differs from {self.image_size}")
        i = self.frame_index + 1
        padded = _pad_to_stride(img)
        x = self.provider(padded, frame_index=i)
        x32 = np.asarray(x, dtype=np.float32)
        full = [self.refiner(st, predict_coarse(st, x)) for st in self.states]
        h, w = self.image_size
        out = aggregate_multi_object([p[:h, :w] for p in full], [st.object_id for st in self.states])
        update = self.cfg.t_s is not None and i % self.cfg.t_s == 0
        for st, p in zip(self.states, full):
            if self.cfg.memory_labels == "binary":
                p = (p >= self.cfg.binarize_threshold).astype(np.float64)
            st.memory.append(x32, p.astype(np.float32), self._label_system(p, "uniform"))
            if update:
                st.params = self._optimize(st, W2_ONLY, self.cfg.optimizer.update_schedule(), i)
                self._emit(dict(event="update", frame=i, object=st.object_id))
        self.frame_index = i
        return out


def process_sequence(frames, first_masks, cfg=None, provider=None, sink=None, refiner=None):
    """Run the engine over an ordered sequence of (3, H, W) images."""
    engine = SegmentationEngine(cfg, provider, sink, refiner)
    outputs = []
    for i, frame in enumerate(frames):
        try:
            if i == 0:
                outputs.append(engine.initialize(frame, first_masks))
            else:
                outputs.append(engine.step(frame))
        except Exception as exc:
            exc.frame_index = i
            try:
                wrapped = type(exc)(f"frame {i}: {exc}")
            except Exception:
                raise exc
            wrapped.frame_index = i
            raise wrapped from exc
    if not outputs:
        raise InputError("sequence has no frames")
    return outputs
