"""Seeded retrieval-style tasks with model-independent expected answers.

All three kinds reduce to content-addressed retrieval, which the
identity-skip attention of the toy model can perform untrained:

* NEEDLE_RETRIEVAL plants one visual token carrying a marker direction
  plus a payload embedding; the final text token queries the marker and
  the expected answer is the payload id.
* COUNT marks several visual tokens; each carries the count-encoding
  payload so a retrieval-capable model can answer, while the expected
  answer (the number of marks) stays computable without the model.
* COPY plants a span of marked text tokens to echo; position i of the
  span is keyed by position i-1's payload so echoing is a content chain.
  An untrained model reliably echoes only the first position, which is
  why scores are per-position match fractions (baselines stay > 0).

Marker directions live in the model's reserved tag channel, exactly
orthogonal to every vocabulary row, so they attract attention without
ever contaminating the greedy readout.
"""

import enum

import numpy as np

from ..errors import UnknownTaskKind
from .sequences import TEXT, VISUAL, TokenSequence

KEY_GAIN = 12.0      # marker amplitude in planted keys
QUERY_GAIN = 12.0    # marker amplitude in the querying text token
PAYLOAD_GAIN = 6.0   # answer-embedding amplitude in planted values
CLS_BONUS = 6.0      # pre-softmax bonus marked tokens get from the encoder stage


class TaskKind(str, enum.Enum):
    NEEDLE_RETRIEVAL = "needle"
    COPY = "copy"
    COUNT = "count"


def _coerce_kind(kind):
    if isinstance(kind, TaskKind):
        return kind
    try:
        return TaskKind(kind)
    except ValueError:
        try:
            return TaskKind[str(kind)]
        except KeyError:
            raise UnknownTaskKind(f"unknown task kind {kind!r}") from None


def _filler(rng, model, n):
    """Filler ids from the upper half of the vocab (payloads live in the
    lower half, so fillers can never collide with an expected answer)."""
    lo = model.config.vocab_size // 2
    return rng.integers(lo, model.config.vocab_size, size=n)


def _payload_ids(rng, model, n, low=0):
    return rng.choice(
        np.arange(low, model.config.vocab_size // 2), size=n, replace=False
    )


def _marker(rng, model):
    return model.marker_direction(rng)


def _cls_attention(rng, l_v, bonus_positions):
    scores = rng.standard_normal(l_v)
    scores[bonus_positions] += CLS_BONUS
    e = np.exp(scores - scores.max())
    return e / e.sum()


def make_task(kind, params, seed, model):
    """Build (TokenSequence, expected answer ids) for a task instance.

    params is a dict of generator knobs (l_v, l_t, marks, span_len);
    identical (kind, params, seed) triples yield identical sequences.
    """
    kind = _coerce_kind(kind)
    rng = np.random.default_rng(seed)
    p = dict(params or {})
    l_v = int(p.get("l_v", 240))
    l_t = int(p.get("l_t", 16))
    n_trail = int(p.get("n_trail", 2))
    if l_v < 1 or l_t < max(2, n_trail + 2):
        raise ValueError("need l_v >= 1 and l_t >= n_trail + 2")
    h = model.hidden_dim
    E = model.embed
    marker = _marker(rng, model)

    vis_ids = _filler(rng, model, l_v)
    txt_ids = _filler(rng, model, l_t)
    emb = np.empty((l_v + l_t, h))
    emb[:l_v] = E[vis_ids]
    emb[l_v:] = E[txt_ids]
    ids = np.concatenate([vis_ids, txt_ids])
    modality = np.concatenate([
        np.full(l_v, VISUAL, dtype=np.uint8), np.full(l_t, TEXT, dtype=np.uint8)
    ])
    # The querying cue sits before n_trail boilerplate fillers, so the
    # force-retained recent window does not automatically keep the cue's
    # payload-laden rows; the first decode step re-feeds the cue itself.
    q_pos = l_v + l_t - 1 - n_trail
    cue = QUERY_GAIN * marker

    if kind is TaskKind.NEEDLE_RETRIEVAL:
        payload = int(_payload_ids(rng, model, 1)[0])
        pos = int(rng.integers(0, l_v))
        emb[pos] = KEY_GAIN * marker + PAYLOAD_GAIN * E[payload]
        emb[q_pos] = cue
        cls = _cls_attention(rng, l_v, [pos])
        expected = [payload]
    elif kind is TaskKind.COUNT:
        marks = int(p.get("marks", int(rng.integers(2, 9))))
        if not 1 <= marks < min(l_v + 1, model.config.vocab_size // 2):
            raise ValueError("marks out of generator bounds")
        positions = np.sort(rng.choice(l_v, size=marks, replace=False))
        for pos in positions:
            emb[pos] = KEY_GAIN * marker + PAYLOAD_GAIN * E[marks]
        emb[q_pos] = cue
        cls = _cls_attention(rng, l_v, positions)
        expected = [marks]
    elif kind is TaskKind.COPY:
        span_len = int(p.get("span_len", 1))
        if not 1 <= span_len <= l_t - 1 - n_trail:
            raise ValueError("span_len out of generator bounds")
        payloads = _payload_ids(rng, model, span_len)
        start = int(rng.integers(0, l_t - span_len - n_trail - 1))
        for i in range(span_len):
            key_dir = marker if i == 0 else E[payloads[i - 1]]
            emb[l_v + start + i] = KEY_GAIN * key_dir + PAYLOAD_GAIN * E[payloads[i]]
        emb[q_pos] = cue
        cls = _cls_attention(rng, l_v, [])
        expected = [int(x) for x in payloads]
    else:  # pragma: no cover - _coerce_kind already raised
        raise UnknownTaskKind(str(kind))

    seq = TokenSequence(ids, emb, modality, cls, decode_seed=cue)
    return seq, expected


def score_prediction(expected, output_ids):
    """Per-position match fraction of the decoded prefix vs the answer."""
    if not expected:
        return 1.0
    hits = sum(
        1 for i, want in enumerate(expected)
        if i < len(output_ids) and output_ids[i] == want
    )
    return hits / len(expected)
