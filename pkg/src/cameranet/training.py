"""The three-step training protocol.

Step 1 trains the restoration net alone on (raw, groundtruth-XYZ) pairs.
Step 2 trains the enhancement net alone on (groundtruth-XYZ rendered to
sRGB, groundtruth-sRGB) pairs; because its inputs come from groundtruth
rather than step 1's outputs, steps 1 and 2 are independent and each
draws from its own seeded random stream. Step 3 fine-tunes both nets
jointly end-to-end from the raw mosaic at a small fixed learning rate.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from cameranet import isp, pipeline, unet
from cameranet.errors import TrainingAborted, ValidationError
from cameranet.image import CaptureMetadata, ImageTensor, RawImage
from cameranet.losses import (DEFAULT_LOG_EPS, LossConfig, enhancement_loss,
                              joint_loss, restoration_loss)
from cameranet.optim import adam_init, adam_step
from cameranet.synth import SampleTriplet

# per-scenario weighting of restoration vs enhancement in the joint loss
SCENARIO_LAMBDA = {"hdrplus-like": 0.5, "sid-like": 0.9, "fivek-like": 0.1}

# dihedral patterns whose diagonal reflection maps each CFA site to a
# same-color site (R and B sit on the main diagonal)
_TRANSPOSE_SAFE = ("RGGB", "BGGR")


@dataclass
class TrainingSchedule:
    epochs_step1: int = 30
    epochs_step2: int = 30
    epochs_step3: int = 10
    lr_initial: float = 1e-4
    lr_decay_factor: float = 0.1
    lr_decay_at: float = 0.75
    lr_step3: float = 1e-5
    lambda_weight: float = 0.5
    patch_size: int = 64
    seed: int = 0
    augment: bool = True
    log_epsilon: float = DEFAULT_LOG_EPS

    def __post_init__(self):
        for name in ("epochs_step1", "epochs_step2", "epochs_step3"):
            if getattr(self, name) < 1:
                raise ValidationError(f"TrainingSchedule.{name} must be >= 1")
        if self.lr_initial <= 0 or self.lr_step3 <= 0:
            raise ValidationError("learning rates must be positive")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValidationError("lr_decay_factor must lie in (0, 1]")
        if not 0.0 < self.lr_decay_at <= 1.0:
            raise ValidationError("lr_decay_at must lie in (0, 1]")
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValidationError("lambda_weight must lie in [0, 1]")
        if self.patch_size < 2 or self.patch_size % 2:
            raise ValidationError("patch_size must be even and >= 2")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


def lr_at(epoch, total_epochs, schedule):
    """Piecewise-constant rate: lr_initial until lr_decay_at of the run,
    then lr_initial * lr_decay_factor (a single step)."""
    if not 0 <= epoch < total_epochs:
        raise ValidationError(f"epoch {epoch} outside [0, {total_epochs})")
    if epoch >= schedule.lr_decay_at * total_epochs:
        return schedule.lr_initial * schedule.lr_decay_factor
    return schedule.lr_initial


# -- geometric augmentation ----------------------------------------------------

def _dihedral_plane(plane, transpose, flip_y, flip_x, cfa_roll):
    """One of the 8 axis-aligned symmetries. With cfa_roll, every flip is
    followed by a 1-pixel roll along the flipped axis so that the 2x2
    CFA phase of the result matches the input's."""
    out = plane
    if transpose:
        out = np.swapaxes(out, 0, 1)
    if flip_y:
        out = np.flip(out, axis=0)
        if cfa_roll:
            out = np.roll(out, 1, axis=0)
    if flip_x:
        out = np.flip(out, axis=1)
        if cfa_roll:
            out = np.roll(out, 1, axis=1)
    return np.ascontiguousarray(out)


def augment_choices(pattern):
    """Valid dihedral element indices for a CFA pattern. Flips are always
    phase-recoverable; the diagonal reflection only when R and B sit on
    the pattern's main diagonal."""
    if pattern in _TRANSPOSE_SAFE:
        return list(range(8))
    return [k for k in range(8) if not k & 1]


def augment(triplet: SampleTriplet, k) -> SampleTriplet:
    """Apply dihedral element k (bit 0: transpose, bit 1: vertical flip,
    bit 2: horizontal flip) to the mosaic and both groundtruths, keeping
    the CFA phase and pixel alignment intact. The 1-pixel phase roll
    wraps one border row/column; losses tolerate that, exact geometric
    checks should ignore a 1-pixel frame."""
    if k not in augment_choices(triplet.raw.pattern):
        raise ValidationError(
            f"augmentation {k} breaks CFA phase for {triplet.raw.pattern}")
    t, fy, fx = bool(k & 1), bool(k & 2), bool(k & 4)
    raw = triplet.raw
    meta = raw.metadata
    vignette = meta.vignette_gain
    if vignette is not None:
        vignette = _dihedral_plane(vignette, t, fy, fx, cfa_roll=True)
    new_meta = CaptureMetadata(
        color_matrix_1=meta.color_matrix_1, color_matrix_2=meta.color_matrix_2,
        wb_gains=meta.wb_gains, vignette_gain=vignette,
        bad_pixel_list=None if not meta.bad_pixel_list else [
            _map_coord(y, x, raw.shape, t, fy, fx)
            for (y, x) in meta.bad_pixel_list])
    new_raw = RawImage(
        cfa=_dihedral_plane(raw.cfa, t, fy, fx, cfa_roll=True),
        pattern=raw.pattern, black_level=raw.black_level,
        white_level=raw.white_level, metadata=new_meta)
    g_rest = triplet.g_rest.copy()
    g_enh = triplet.g_enh.copy()
    g_rest.data = _dihedral_plane(g_rest.data, t, fy, fx, cfa_roll=True)
    g_enh.data = _dihedral_plane(g_enh.data, t, fy, fx, cfa_roll=True)
    return SampleTriplet(raw=new_raw, g_rest=g_rest, g_enh=g_enh)


def _map_coord(y, x, shape, transpose, flip_y, flip_x):
    h, w = shape
    if transpose:
        y, x = x, y
        h, w = w, h
    if flip_y:
        y = (h - 1 - y + 1) % h
    if flip_x:
        x = (w - 1 - x + 1) % w
    return (y, x)


# -- patch sampling ------------------------------------------------------------

def sample_patch(triplet: SampleTriplet, size, rng) -> SampleTriplet:
    """Random size x size crop at an even offset, so the crop's CFA phase
    equals the full mosaic's. Returns the full triplet if it is already
    no larger than the patch."""
    h, w = triplet.raw.shape
    if size >= h and size >= w:
        return triplet
    size_y, size_x = min(size, h), min(size, w)
    y0 = 2 * int(rng.integers(0, (h - size_y) // 2 + 1))
    x0 = 2 * int(rng.integers(0, (w - size_x) // 2 + 1))
    ys, xs = slice(y0, y0 + size_y), slice(x0, x0 + size_x)
    raw = triplet.raw
    meta = raw.metadata
    vignette = meta.vignette_gain
    if vignette is not None:
        vignette = np.ascontiguousarray(vignette[ys, xs])
    bad = None
    if meta.bad_pixel_list:
        bad = [(y - y0, x - x0) for (y, x) in meta.bad_pixel_list
               if y0 <= y < y0 + size_y and x0 <= x < x0 + size_x] or None
    new_meta = CaptureMetadata(
        color_matrix_1=meta.color_matrix_1, color_matrix_2=meta.color_matrix_2,
        wb_gains=meta.wb_gains, vignette_gain=vignette, bad_pixel_list=bad)
    new_raw = RawImage(
        cfa=np.ascontiguousarray(raw.cfa[ys, xs]), pattern=raw.pattern,
        black_level=raw.black_level, white_level=raw.white_level,
        metadata=new_meta)
    g_rest = ImageTensor(np.ascontiguousarray(triplet.g_rest.data[ys, xs]),
                         triplet.g_rest.space)
    g_enh = ImageTensor(np.ascontiguousarray(triplet.g_enh.data[ys, xs]),
                        triplet.g_enh.space)
    return SampleTriplet(raw=new_raw, g_rest=g_rest, g_enh=g_enh)


def draw_training_patch(triplet, schedule, rng):
    patch = sample_patch(triplet, schedule.patch_size, rng)
    if schedule.augment:
        choices = augment_choices(patch.raw.pattern)
        k = choices[int(rng.integers(0, len(choices)))]
        if k:
            patch = augment(patch, k)
    return patch


# -- training loops ------------------------------------------------------------

def _stream(schedule, step_id):
    """Each protocol step owns an independent random stream, so running
    step 1 before or after step 2 changes neither."""
    return np.random.default_rng(np.random.SeedSequence([schedule.seed,
                                                         step_id]))


def _abort(params_list, out_dir, step_id, epoch, loss_value):
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for p in params_list:
            p.save(out / f"aborted_step{step_id}_{p.role}")
    raise TrainingAborted(
        f"step {step_id} epoch {epoch}: non-finite loss {loss_value}")


def _emit(log, record):
    if log is not None:
        log(record)


def jsonl_logger(path):
    """Append-mode JSONL writer usable as the log callback."""
    handle = open(path, "a")

    def write(record):
        handle.write(json.dumps(record) + "\n")
        handle.flush()
    write.close = handle.close
    return write


def _prepared_xyz_tensor(raw):
    prep = isp.prepare(raw)
    return pipeline.to_nchw(isp.camera_rgb_to_xyz(prep, raw.metadata))


def train_step1(params, spec, triplets, schedule, log=None, out_dir=None):
    """Restoration net alone: prepared raw in XYZ vs groundtruth XYZ."""
    state = adam_init(params)
    rng = _stream(schedule, 1)
    history = []
    total = schedule.epochs_step1
    for epoch in range(total):
        lr = lr_at(epoch, total, schedule)
        losses = []
        for trip in triplets:
            patch = draw_training_patch(trip, schedule, rng)
            x = _prepared_xyz_tensor(patch.raw)
            gt = pipeline.to_nchw(patch.g_rest)
            params.zero_grads()
            pred = unet.forward_unet(params, spec, x)
            loss = restoration_loss(pred, gt, schedule.log_epsilon)
            value = float(loss.data)
            if not np.isfinite(value):
                _abort([params], out_dir, 1, epoch, value)
            loss.backward()
            adam_step(params, state, lr)
            losses.append(value)
        record = {"step": 1, "epoch": epoch, "lr": lr,
                  "loss": float(np.mean(losses))}
        history.append(record)
        _emit(log, record)
    return history


def train_step2(params, spec, triplets, schedule, log=None, out_dir=None):
    """Enhancement net alone: groundtruth XYZ rendered to sRGB vs the
    enhanced groundtruth."""
    state = adam_init(params)
    rng = _stream(schedule, 2)
    history = []
    total = schedule.epochs_step2
    for epoch in range(total):
        lr = lr_at(epoch, total, schedule)
        losses = []
        for trip in triplets:
            patch = draw_training_patch(trip, schedule, rng)
            x = pipeline.to_nchw(isp.xyz_to_srgb(patch.g_rest))
            gt = pipeline.to_nchw(patch.g_enh)
            params.zero_grads()
            pred = unet.forward_unet(params, spec, x)
            loss = enhancement_loss(pred, gt)
            value = float(loss.data)
            if not np.isfinite(value):
                _abort([params], out_dir, 2, epoch, value)
            loss.backward()
            adam_step(params, state, lr)
            losses.append(value)
        record = {"step": 2, "epoch": epoch, "lr": lr,
                  "loss": float(np.mean(losses))}
        history.append(record)
        _emit(log, record)
    return history


def train_step3(theta1, spec1, theta2, spec2, triplets, schedule,
                log=None, out_dir=None, decaying_lr=False):
    """Joint fine-tuning: raw mosaic through both nets, lambda-weighted
    combined loss, a small fixed learning rate for both.

    With decaying_lr the step follows the full lr_initial schedule
    instead — the "joint training from scratch" ablation, where the tiny
    fine-tuning rate would be a strawman.
    """
    cfg = LossConfig(epsilon=schedule.log_epsilon,
                     lambda_weight=schedule.lambda_weight)
    state1 = adam_init(theta1)
    state2 = adam_init(theta2)
    rng = _stream(schedule, 3)
    history = []
    for epoch in range(schedule.epochs_step3):
        lr = (lr_at(epoch, schedule.epochs_step3, schedule)
              if decaying_lr else schedule.lr_step3)
        losses = []
        for trip in triplets:
            patch = draw_training_patch(trip, schedule, rng)
            x = _prepared_xyz_tensor(patch.raw)
            gt_rest = pipeline.to_nchw(patch.g_rest)
            gt_enh = pipeline.to_nchw(patch.g_enh)
            theta1.zero_grads()
            theta2.zero_grads()
            pred_rest = unet.forward_unet(theta1, spec1, x)
            pred_srgb = pipeline.xyz_to_srgb_tensor(pred_rest)
            pred_enh = unet.forward_unet(theta2, spec2, pred_srgb)
            loss = joint_loss(pred_rest, gt_rest, pred_enh, gt_enh, cfg)
            value = float(loss.data)
            if not np.isfinite(value):
                _abort([theta1, theta2], out_dir, 3, epoch, value)
            loss.backward()
            adam_step(theta1, state1, lr)
            adam_step(theta2, state2, lr)
            losses.append(value)
        record = {"step": 3, "epoch": epoch, "lr": lr,
                  "loss": float(np.mean(losses))}
        history.append(record)
        _emit(log, record)
    return history


def train_one_stage(params, spec, triplets, schedule, log=None, out_dir=None):
    """Ablation baseline: a single net maps the prepared raw (rendered to
    sRGB) straight to the enhanced groundtruth. Gets the step 1 + step 3
    epoch budget so total gradient updates match the two-stage protocol."""
    state = adam_init(params)
    rng = _stream(schedule, 4)
    history = []
    total = schedule.epochs_step1 + schedule.epochs_step3
    for epoch in range(total):
        lr = lr_at(epoch, total, schedule)
        losses = []
        for trip in triplets:
            patch = draw_training_patch(trip, schedule, rng)
            x = pipeline.xyz_to_srgb_tensor(_prepared_xyz_tensor(patch.raw))
            gt = pipeline.to_nchw(patch.g_enh)
            params.zero_grads()
            pred = unet.forward_unet(params, spec, x)
            loss = enhancement_loss(pred, gt)
            value = float(loss.data)
            if not np.isfinite(value):
                _abort([params], out_dir, 4, epoch, value)
            loss.backward()
            adam_step(params, state, lr)
            losses.append(value)
        record = {"step": "one_stage", "epoch": epoch, "lr": lr,
                  "loss": float(np.mean(losses))}
        history.append(record)
        _emit(log, record)
    return history
