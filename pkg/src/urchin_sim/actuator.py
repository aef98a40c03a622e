"""One foldable telescopic spine actuator.

A pinion drives a chain of articulated rack links.  Links pushed out past
the holder guides lock rigid (a locking arm drops into the rack slot) and
always form a contiguous rigid prefix of the chain; driving the chain back
in rotates the unlocking arm and folds the link again.  The rigid prefix
length is the actuator extension.  A locked link resists load on all three
axes, so the dynamics layer treats spine tips as rigidly attached points.

The continuous extension is the source of truth; the discrete chain is
stepped to ``floor(extension / pitch)`` after every update, which keeps the
two representations within one link of each other without double
integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from urchin_sim.errors import SaturationError

STROKE_MM = 64.0            # usable extension above the base
EXTENDED_LEN_MM = 89.0      # overall envelope, fully extended
BASE_HEIGHT_MM = 25.0       # overall envelope, fully contracted
EXTENSION_RATIO = EXTENDED_LEN_MM / BASE_HEIGHT_MM  # 3.56
MAX_RATE_MM_S = 100.0       # articulated-rack drive speed
LEVEL_COUNT = 4             # one fixed base level + three moving levels
LINK_COUNT = 8
LINK_PITCH_MM = 8.0         # 8 links x 8 mm = full 64 mm stroke
GEAR_TEETH_PER_LINK = 2     # build metadata; tooth meshing is not simulated

# Folded-link storage is validated only as a length budget: 8 folded links
# at one tooth-pitch of fold thickness stack within the 25 mm base.


class LinkState(Enum):
    FOLDED = 0
    RIGID = 1


@dataclass(frozen=True)
class RackLink:
    state: LinkState = LinkState.FOLDED


@dataclass(frozen=True)
class RackChain:
    """Ordered link chain; rigid links are a contiguous prefix."""

    links: tuple[RackLink, ...]
    pitch_mm: float = LINK_PITCH_MM
    rigid_count: int = 0

    def __post_init__(self):
        if not 0 <= self.rigid_count <= len(self.links):
            raise ValueError(
                f"rigid_count {self.rigid_count} out of range for {len(self.links)} links")
        for i, link in enumerate(self.links):
            want = LinkState.RIGID if i < self.rigid_count else LinkState.FOLDED
            if link.state is not want:
                raise ValueError(f"link {i} is {link.state.name}; rigid links must form a prefix")

    @staticmethod
    def folded(link_count: int = LINK_COUNT, pitch_mm: float = LINK_PITCH_MM) -> "RackChain":
        return RackChain(tuple(RackLink() for _ in range(link_count)), pitch_mm, 0)


def _chain_with_count(chain: RackChain, rigid_count: int) -> RackChain:
    links = tuple(
        RackLink(LinkState.RIGID if i < rigid_count else LinkState.FOLDED)
        for i in range(len(chain.links)))
    return RackChain(links, chain.pitch_mm, rigid_count)


def rack_advance(chain: RackChain) -> RackChain:
    """Lock the next folded link (pinion clockwise, one link past the guide)."""
    if chain.rigid_count >= len(chain.links):
        raise SaturationError("rack chain fully rigid; extension limit reached")
    return _chain_with_count(chain, chain.rigid_count + 1)


def rack_retract(chain: RackChain) -> RackChain:
    """Unlock the last rigid link (pinion counterclockwise)."""
    if chain.rigid_count <= 0:
        raise SaturationError("rack chain fully folded")
    return _chain_with_count(chain, chain.rigid_count - 1)


def extension_of(chain: RackChain) -> float:
    """Extension in mm produced by the rigid prefix."""
    return chain.rigid_count * chain.pitch_mm


@dataclass(frozen=True)
class TelescopicActuator:
    """Rate-limited telescopic spine with its rack chain.

    ``extension_mm`` tracks ``target_mm`` at ``max_rate_mm_s`` with exact
    arrival; the chain's rigid prefix follows the continuous extension.
    """

    chain: RackChain
    extension_mm: float = 0.0
    target_mm: float = 0.0
    max_rate_mm_s: float = MAX_RATE_MM_S
    stroke_mm: float = STROKE_MM
    extended_len_mm: float = EXTENDED_LEN_MM
    base_height_mm: float = BASE_HEIGHT_MM
    level_count: int = LEVEL_COUNT

    def __post_init__(self):
        if not 0.0 <= self.extension_mm <= self.stroke_mm:
            raise ValueError(f"extension_mm {self.extension_mm} outside [0, {self.stroke_mm}]")
        if abs(self.extension_mm - extension_of(self.chain)) >= self.chain.pitch_mm:
            raise ValueError(
                f"chain rigid_count {self.chain.rigid_count} disagrees with "
                f"extension {self.extension_mm} mm by a full link")

    @staticmethod
    def retracted() -> "TelescopicActuator":
        return TelescopicActuator(RackChain.folded())

    def with_target(self, target_mm: float) -> "TelescopicActuator":
        if not 0.0 <= target_mm <= self.stroke_mm:
            raise ValueError(f"target_mm {target_mm} outside [0, {self.stroke_mm}]")
        if target_mm == self.target_mm:
            return self
        return replace(self, target_mm=target_mm)


def _chain_for_extension(chain: RackChain, extension_mm: float) -> RackChain:
    want = min(int(math.floor(extension_mm / chain.pitch_mm)), len(chain.links))
    while chain.rigid_count < want:
        chain = rack_advance(chain)
    while chain.rigid_count > want:
        chain = rack_retract(chain)
    return chain


def actuator_update(act: TelescopicActuator, dt: float) -> TelescopicActuator:
    """Advance the actuator by dt seconds toward its target.

    Monotone toward the target, never faster than max_rate_mm_s, exact
    arrival with no overshoot.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not 0.0 <= act.target_mm <= act.stroke_mm:
        raise ValueError(f"target_mm {act.target_mm} outside [0, {act.stroke_mm}]")
    if act.extension_mm == act.target_mm:
        return act
    step = act.max_rate_mm_s * dt
    if act.target_mm > act.extension_mm:
        new_ext = min(act.target_mm, act.extension_mm + step)
    else:
        new_ext = max(act.target_mm, act.extension_mm - step)
    return replace(act, extension_mm=new_ext, chain=_chain_for_extension(act.chain, new_ext))


def level_lengths(extension_mm: float) -> tuple[float, float, float]:
    """Per-level travel: the extension split equally over the 3 moving levels."""
    if not 0.0 <= extension_mm <= STROKE_MM:
        raise ValueError(f"extension_mm {extension_mm} outside [0, {STROKE_MM}]")
    each = extension_mm / 3.0
    return (each, each, each)
