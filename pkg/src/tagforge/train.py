"""Adam, the training loop with early stopping, evaluation, aggregation.

Protocol per run: every epoch does a training-mode forward, cross-entropy
on the train mask, a full backward pass, one Adam step, then a validation
accuracy check. Training stops after ``patience`` consecutive epochs
without a new best validation accuracy, or at the epoch cap. The reported
test accuracy always belongs to the best-validation parameter snapshot,
which is restored into the model before returning.

Weight decay is coupled (added to the gradient before the moment updates),
matching common GNN framework defaults. Early stopping monitors validation
accuracy, the quantity the benchmark reports.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SplitMask
from .models import Model, PropagationContext, build_context, forward, forward_backward
from .nn import Parameter, cross_entropy
from .rng import SplitMix64

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 300
    patience: int = 10
    lr: float = 0.01
    weight_decay: float = 5e-4
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, parameters: dict[str, Parameter]):
        self.m = {name: np.zeros_like(p.value) for name, p in parameters.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in parameters.items()}
        self.t = 0


def adam_step(parameters: dict[str, Parameter], state: AdamState, spec: TrainSpec) -> None:
    """One coupled-L2 Adam update; consumes and clears every gradient."""
    missing = [name for name, p in parameters.items() if p.grad is None]
    if missing:
        raise ValueError(f"adam_step before backward: no gradient for {missing[0]}")
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1**state.t
    bc2 = 1.0 - ADAM_BETA2**state.t
    for name, p in parameters.items():
        g = p.grad + spec.weight_decay * p.value
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * np.square(g)
        p.value -= spec.lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        p.grad = None


def evaluate(
    model: Model,
    dataset: Dataset,
    mask: np.ndarray,
    context: PropagationContext | None = None,
) -> float:
    """Fraction of masked nodes whose argmax logit matches the label.

    Argmax ties resolve to the lowest class id.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("evaluate over an empty mask")
    logits = forward(model, dataset, training=False, context=context)
    predictions = np.argmax(logits[mask], axis=1)
    return float(np.mean(predictions == dataset.labels[mask]))


@dataclass
class RunResult:
    best_val_acc: float
    test_acc_at_best_val: float
    epochs_ran: int
    loss_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)


def run_log_lines(result: RunResult) -> list[str]:
    """Per-epoch log lines, tab-separated: epoch, train_loss, val_acc."""
    return [
        f"{epoch}\t{loss:.6f}\t{val:.6f}"
        for epoch, (loss, val) in enumerate(zip(result.loss_curve, result.val_curve), 1)
    ]


def train(
    model: Model,
    dataset: Dataset,
    split: SplitMask,
    spec: TrainSpec,
    seed: int = 0,
) -> RunResult:
    """Train in place and return the run summary.

    Fully deterministic per (model parameters, dataset, split, spec, seed).
    The dropout stream is a child of ``seed``, so sharing one seed with
    init_parameters does not replay the same random values.
    """
    split.validate(dataset.num_nodes)
    context = build_context(dataset.graph)
    rng = SplitMix64(seed).split()
    state = AdamState(model.parameters)

    best_val = -1.0
    best_epoch = 0
    best_params = model.snapshot()
    losses: list[float] = []
    vals: list[float] = []
    epochs_ran = 0

    for epoch in range(1, spec.epochs + 1):
        epochs_ran = epoch
        logits, backward = forward_backward(model, dataset, context, training=True, rng=rng)
        loss, d_logits = cross_entropy(logits, dataset.labels, split.train)
        backward(d_logits)
        adam_step(model.parameters, state, spec)
        val_acc = evaluate(model, dataset, split.val, context)
        losses.append(loss)
        vals.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_params = model.snapshot()
        elif epoch - best_epoch >= spec.patience:
            break

    model.restore(best_params)
    test_acc = evaluate(model, dataset, split.test, context)
    return RunResult(best_val, test_acc, epochs_ran, losses, vals)


def aggregate(results: list[RunResult]) -> tuple[float, float]:
    """Mean and population standard deviation of the test accuracies.

    Accuracies are sorted first, making the result independent of run
    order, and shifted by the smallest value, so identical runs yield an
    exactly zero deviation.
    """
    if len(results) < 2:
        raise ValueError(f"need at least 2 runs to aggregate, got {len(results)}")
    accs = np.sort(np.array([r.test_acc_at_best_val for r in results], dtype=np.float64))
    shifted = accs - accs[0]
    mean_shift = shifted.mean()
    std = float(np.sqrt(np.mean(np.square(shifted - mean_shift))))
    return float(accs[0] + mean_shift), std
