"""Zero-shot step classification from a before/after observation pair.

The predicted step is the class whose before-descriptions best match the
start observation plus whose after-descriptions best match the end
observation. No classifier is trained for this; it only uses the encoders.
"""

from __future__ import annotations

import numpy as np

from ..corpus import DescriptionMemory
from ..encoders import class_similarities
from ..engine import Tensor, no_grad


def stepcls_scores(s0_enc, sT_enc, descriptions, C: int, K: int) -> np.ndarray:
    """``(N, C)`` summed before/after similarities from already-encoded vectors."""
    def t(x):
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

    with no_grad():
        before = class_similarities(t(s0_enc), t(descriptions), C, K, "before")
        after = class_similarities(t(sT_enc), t(descriptions), C, K, "after")
    return before.data + after.data


def stepcls_predict(s0_enc, sT_enc, descriptions, C: int, K: int) -> np.ndarray:
    # np.argmax keeps the first maximum, so ties go to the lowest class id
    return np.argmax(stepcls_scores(s0_enc, sT_enc, descriptions, C, K), axis=-1)


def stepcls_zero_shot(model, s0, sT, labels, memory: DescriptionMemory) -> float:
    """Accuracy in percent of the similarity rule with ``model``'s encoders."""
    labels = np.asarray(labels).ravel()
    if len(labels) == 0:
        raise ValueError("stepcls: no samples")
    if len(s0) != len(labels) or len(sT) != len(labels):
        raise ValueError(f"stepcls: {len(s0)} start / {len(sT)} end observations for {len(labels)} labels")
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            s0_enc = model.encode_states(s0)
            sT_enc = model.encode_states(sT)
            desc = model.encode_descriptions(memory)
    finally:
        model.train(was_training)
    preds = stepcls_predict(s0_enc, sT_enc, desc, memory.C, memory.K)
    return 100.0 * float(np.mean(preds == labels))
