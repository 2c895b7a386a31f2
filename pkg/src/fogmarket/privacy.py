"""Privacy-preserving exact averaging by zero-sum masking.

Each service splits fresh random shares among a few peers so that its own
kept share cancels everything it sent; submissions to the aggregator then sum
to exactly the sum of the private vectors. The aggregator learns the exact
average and nothing else; an eavesdropper recovers a service's vector only by
compromising every channel that carries a share touching that service.

The message fabric is simulated in-process with deterministic delivery under
a seed: all mask shares are delivered before any submission is computed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .admm import AveragingTransport
from .numerics import tree_sum

# Receiver id of the platform aggregator in messages and channels.
PLATFORM = -1


@dataclass(frozen=True, eq=False)
class MaskMessage:
    round_index: int
    sender: int
    receiver: int     # PLATFORM for submissions
    kind: str         # "mask" | "submission"
    payload: np.ndarray


def channel(a: int, b: int) -> tuple[int, int]:
    """Canonical undirected channel key between two parties."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True, eq=False)
class MaskingRound:
    """Full transcript of one averaging round.

    ``kept_shares[i]`` is the share service ``i`` holds back; together with
    its sent masks it sums to zero. ``submissions[i]`` is the masked vector
    the aggregator receives.
    """

    round_index: int
    aggregator: int
    neighbor_sets: tuple[tuple[int, ...], ...]
    kept_shares: np.ndarray          # (N, K)
    sent_masks: dict
    submissions: np.ndarray          # (N, K)
    messages: tuple[MaskMessage, ...]
    average: np.ndarray              # (K,)

    @property
    def num_services(self) -> int:
        return self.submissions.shape[0]

    def inbound_sets(self) -> tuple[tuple[int, ...], ...]:
        """Per-service senders that chose it as a neighbor."""
        inbound: list[list[int]] = [[] for _ in range(self.num_services)]
        for (sender, receiver) in self.sent_masks:
            inbound[receiver].append(sender)
        return tuple(tuple(sorted(v)) for v in inbound)

    def contact_sets(self) -> tuple[tuple[int, ...], ...]:
        """All services a given service exchanged masks with."""
        inbound = self.inbound_sets()
        return tuple(
            tuple(sorted(set(self.neighbor_sets[i]) | set(inbound[i])))
            for i in range(self.num_services))

    def jsonl_lines(self) -> list[str]:
        lines = []
        for msg in self.messages:
            digest = hashlib.sha256(
                np.ascontiguousarray(msg.payload).tobytes()).hexdigest()
            lines.append(json.dumps({
                "round": msg.round_index,
                "from": msg.sender,
                "to": msg.receiver,
                "kind": msg.kind,
                "payload_digest": digest,
            }))
        return lines


def write_transcript(rounds, path: str | Path) -> None:
    """Dump rounds as JSON lines, one message per line (digests only)."""
    with Path(path).open("w") as fh:
        for rnd in rounds:
            for line in rnd.jsonl_lines():
                fh.write(line + "\n")


def run_masking_round(vectors: np.ndarray, neighbor_count: int,
                      rng: np.random.Generator | int | None = None,
                      mask_scale: float | None = None,
                      round_index: int = 0,
                      aggregator: int = PLATFORM,
                      masks_from: MaskingRound | None = None,
                      ) -> tuple[np.ndarray, MaskingRound]:
    """Average private vectors without revealing them to the aggregator.

    Every service picks ``neighbor_count`` random peers, sends each a uniform
    mask share, and keeps the negative sum of what it sent; submissions add
    the kept share and every received share to the private vector. Shares are
    drawn fresh per call; ``masks_from`` deliberately reuses a previous
    round's shares to stage the replay attack the fresh-mask rule prevents.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2:
        raise ValueError("vectors must be an (N, K) array")
    n, k = vectors.shape
    if n < 2:
        raise ValueError("masking needs at least two services")
    if not 1 <= neighbor_count <= n - 1:
        raise ValueError(f"neighbor_count must be in [1, {n - 1}]")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    if masks_from is not None:
        neighbor_sets = masks_from.neighbor_sets
        sent_masks = masks_from.sent_masks
        kept = masks_from.kept_shares
    else:
        if mask_scale is None:
            peak = float(np.max(np.abs(vectors)))
            mask_scale = 10.0 * peak if peak > 0 else 1.0
        neighbor_sets = []
        sent_masks = {}
        kept_rows = []
        for i in range(n):
            others = np.array([s for s in range(n) if s != i])
            neighbors = tuple(sorted(
                int(v) for v in rng.choice(others, size=neighbor_count,
                                           replace=False)))
            neighbor_sets.append(neighbors)
            shares = rng.uniform(-mask_scale, mask_scale,
                                 size=(neighbor_count, k))
            for peer, share in zip(neighbors, shares):
                sent_masks[(i, peer)] = share
            kept_rows.append(-shares.sum(axis=0))
        neighbor_sets = tuple(neighbor_sets)
        kept = np.array(kept_rows)

    messages = []
    for i in range(n):
        for peer in neighbor_sets[i]:
            messages.append(MaskMessage(round_index, i, peer, "mask",
                                        sent_masks[(i, peer)]))
    submissions = np.empty_like(vectors)
    for i in range(n):
        z = vectors[i] + kept[i]
        for sender in range(n):
            if (sender, i) in sent_masks:
                z = z + sent_masks[(sender, i)]
        submissions[i] = z
        if i != aggregator:
            messages.append(MaskMessage(round_index, i, aggregator,
                                        "submission", z))
    average = tree_sum(submissions) / n
    transcript = MaskingRound(
        round_index=round_index,
        aggregator=aggregator,
        neighbor_sets=neighbor_sets,
        kept_shares=kept,
        sent_masks=sent_masks,
        submissions=submissions,
        messages=tuple(messages),
        average=average,
    )
    return average, transcript


class MaskedTransport(AveragingTransport):
    """Averaging transport that runs one masking round per call.

    Fresh shares every round come from a single seeded generator, so the
    whole conversation is deterministic under the seed. The aggregator can
    be the platform or a designated service (the fully-distributed wiring).
    """

    def __init__(self, neighbor_count: int, seed: int | None = None,
                 mask_scale: float | None = None, aggregator: int = PLATFORM,
                 record: bool = False):
        self.neighbor_count = neighbor_count
        self.aggregator = aggregator
        self.mask_scale = mask_scale
        self.record = record
        self.transcripts: list[MaskingRound] = []
        self.rounds_run = 0
        self._rng = np.random.default_rng(seed)

    def average(self, vectors: np.ndarray) -> np.ndarray:
        avg, transcript = run_masking_round(
            vectors, self.neighbor_count, self._rng,
            mask_scale=self.mask_scale, round_index=self.rounds_run,
            aggregator=self.aggregator)
        self.rounds_run += 1
        if self.record:
            self.transcripts.append(transcript)
        return avg


def messages_per_round(num_services: int, neighbor_count: int) -> int:
    """Protocol cost: every service sends its masks plus one submission."""
    return num_services * neighbor_count + num_services


# ---------------------------------------------------------------------------
# adversary model


def _observed(transcript: MaskingRound, compromised: set) -> dict:
    seen = {}
    for msg in transcript.messages:
        if channel(msg.sender, msg.receiver) in compromised:
            seen[(msg.kind, msg.sender, msg.receiver)] = msg.payload
    return seen


def adversary_replay(transcript: MaskingRound, compromised_channels,
                     ) -> dict[int, np.ndarray]:
    """Reconstruct private vectors from eavesdropped messages only.

    A vector is recovered exactly when the compromised channels carry the
    service's submission and every mask share it sent or received; anything
    less leaves the kept share information-theoretically unknown.
    """
    compromised = {channel(*c) for c in compromised_channels}
    seen = _observed(transcript, compromised)
    recovered = {}
    inbound = transcript.inbound_sets()
    for i in range(transcript.num_services):
        if i == transcript.aggregator:
            continue  # its submission never crosses a channel
        z = seen.get(("submission", i, transcript.aggregator))
        if z is None:
            continue
        sent = [seen.get(("mask", i, peer)) for peer in transcript.neighbor_sets[i]]
        received = [seen.get(("mask", sender, i)) for sender in inbound[i]]
        if any(v is None for v in sent + received):
            continue
        kept = -sum(sent) if sent else 0.0
        recovered[i] = z - kept - sum(received)
    return recovered


def replay_mask_reuse(first: MaskingRound, second: MaskingRound,
                      compromised_channels) -> dict[int, np.ndarray]:
    """Difference attack enabled by reused shares.

    When two rounds share their masks, observing a service's submissions in
    both reveals the change in its private vector with no mask knowledge.
    """
    compromised = {channel(*c) for c in compromised_channels}
    diffs = {}
    for i in range(first.num_services):
        if i == first.aggregator:
            continue
        if channel(i, first.aggregator) in compromised:
            diffs[i] = second.submissions[i] - first.submissions[i]
    return diffs


# ---------------------------------------------------------------------------
# breach probability


@dataclass(frozen=True, eq=False)
class ThreatModel:
    """Per-channel compromise odds and the inbound-contact distribution.

    ``inbound_contact_dist[m]`` is the probability that ``m`` services send a
    service masks without being among its chosen neighbors.
    """

    channel_compromise_prob: float
    inbound_contact_dist: np.ndarray
    platform_corrupt: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.channel_compromise_prob <= 1.0:
            raise ValueError("channel_compromise_prob must be in [0, 1]")
        dist = np.asarray(self.inbound_contact_dist, dtype=float)
        if dist.ndim != 1 or (dist < 0).any():
            raise ValueError("inbound_contact_dist must be a nonnegative vector")
        if abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError("inbound_contact_dist must sum to 1")
        dist = dist.copy()
        dist.setflags(write=False)
        object.__setattr__(self, "inbound_contact_dist", dist)


def breach_probability(model: ThreatModel, neighbor_count: int) -> float:
    """Probability that one service's private vector is disclosed.

    With an honest platform the submission channel must also fall, costing
    one extra factor of the per-channel probability.
    """
    p = model.channel_compromise_prob
    mixture = float(sum(q * p ** m
                        for m, q in enumerate(model.inbound_contact_dist)))
    exponent = neighbor_count if model.platform_corrupt else neighbor_count + 1
    return p ** exponent * mixture


def estimate_inbound_distribution(num_services: int, neighbor_count: int,
                                  rounds: int = 1000,
                                  seed: int | None = 0) -> np.ndarray:
    """Empirical distribution of inbound-only contacts under random peering."""
    if num_services < 2:
        raise ValueError("need at least two services")
    if not 1 <= neighbor_count <= num_services - 1:
        raise ValueError("neighbor_count out of range")
    rng = np.random.default_rng(seed)
    counts = np.zeros(num_services + 1)
    for _ in range(rounds):
        neighbor_sets = []
        for i in range(num_services):
            others = np.array([s for s in range(num_services) if s != i])
            neighbor_sets.append(set(
                int(v) for v in rng.choice(others, size=neighbor_count,
                                           replace=False)))
        for i in range(num_services):
            inbound_only = sum(1 for sender in range(num_services)
                               if sender != i and i in neighbor_sets[sender]
                               and sender not in neighbor_sets[i])
            counts[inbound_only] += 1
    dist = counts / counts.sum()
    return dist
