"""Multimodal token sequences.

Layout contract: all VISUAL tokens precede all TEXT tokens, matching the
prefill layout that post-vision scoring assumes (text queries are the
rows after the visual block). Visual tokens are synthesized directly as
embeddings; there is no image pipeline.
"""

import numpy as np

from ..errors import ShapeMismatch

VISUAL = 0
TEXT = 1


class TokenSequence:
    """Ordered multimodal tokens with modality spans and embeddings.

    ids: int64 [l] (synthetic rows such as merge centroids use id -1);
    embeddings: float64 [l, hidden]; modality: uint8 [l] of VISUAL/TEXT;
    cls_attention: optional float64 [l_v] from the synthetic visual
    encoder stage (a probability vector over visual tokens);
    decode_seed: optional [hidden] answer-elicitation cue the first decode
    step re-feeds (defaults to the final token's embedding).
    """

    def __init__(self, ids, embeddings, modality, cls_attention=None,
                 decode_seed=None):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        self.modality = np.asarray(modality, dtype=np.uint8)
        self.decode_seed = None if decode_seed is None \
            else np.asarray(decode_seed, dtype=np.float64)
        l = len(self.ids)
        if self.embeddings.shape[0] != l or self.modality.shape[0] != l:
            raise ShapeMismatch("ids/embeddings/modality length mismatch")
        if l == 0:
            raise ShapeMismatch("empty sequence")
        if np.any(np.diff(self.modality.astype(np.int8)) < 0):
            raise ShapeMismatch("visual tokens must all precede text tokens")
        if self.modality[-1] != TEXT:
            raise ShapeMismatch("sequence needs at least one text token")
        self._l_v = int(np.sum(self.modality == VISUAL))
        if cls_attention is not None:
            cls_attention = np.asarray(cls_attention, dtype=np.float64)
            if cls_attention.shape != (self._l_v,):
                raise ShapeMismatch("cls_attention must have one entry per visual token")
        self.cls_attention = cls_attention

    def __len__(self):
        return len(self.ids)

    @property
    def length(self):
        return len(self.ids)

    @property
    def l_v(self):
        return self._l_v

    @property
    def l_t(self):
        return len(self.ids) - self._l_v

    @property
    def visual_span(self):
        return (0, self._l_v)

    @property
    def text_span(self):
        return (self._l_v, len(self.ids))

    def replace_visual(self, retained_indices, extra_embeddings=None,
                       retained_embeddings=None):
        """New sequence keeping the given visual indices (plus optional
        synthesized rows appended after them), text block unchanged.

        retained_embeddings, when given, override the retained rows
        (feature merging); extra_embeddings rows get id -1 and VISUAL tag.
        """
        retained_indices = np.asarray(retained_indices, dtype=np.int64)
        emb = self.embeddings[retained_indices] if retained_embeddings is None \
            else np.asarray(retained_embeddings, dtype=np.float64)
        ids = self.ids[retained_indices]
        parts_ids = [ids]
        parts_emb = [emb]
        if extra_embeddings is not None and len(extra_embeddings):
            extra = np.asarray(extra_embeddings, dtype=np.float64)
            parts_ids.append(np.full(len(extra), -1, dtype=np.int64))
            parts_emb.append(extra)
        t0, t1 = self.text_span
        parts_ids.append(self.ids[t0:t1])
        parts_emb.append(self.embeddings[t0:t1])
        n_vis = sum(len(p) for p in parts_ids[:-1])
        modality = np.concatenate([
            np.zeros(n_vis, dtype=np.uint8),
            np.ones(t1 - t0, dtype=np.uint8),
        ])
        return TokenSequence(
            np.concatenate(parts_ids), np.vstack(parts_emb), modality, None,
            decode_seed=self.decode_seed,
        )
