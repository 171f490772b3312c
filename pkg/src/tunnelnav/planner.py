"""Landmark drop planning for the three tunnel-information levels: straight
length only, length plus turn count, and full topology (with LOS-driven pull
adjustment), plus drop staggering variants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (TunnelTopology, Turn, arclength_of, pose_at,
                       pull_location, ray_segment_intersection)

MODE_PAIR = "pair"
MODE_LEFT = "single-left"
MODE_RIGHT = "single-right"
MODE_ANGLED = "angled-pair"
MODE_CODES = {MODE_PAIR: 0, MODE_LEFT: 1, MODE_RIGHT: 2, MODE_ANGLED: 3}

# Default backward shift added beyond the exact pull distance so that drop
# placement noise and the estimated-distance drop trigger cannot push the
# realized drop past the LOS shadow boundary. Zero reproduces the exact
# geometric pull distance.
DEFAULT_PULL_MARGIN = 5.0

# Pull decisions are made against landmark positions pessimized by this many
# meters toward the inner wall and backward along the path: realized drops
# deviate from the planned spot (estimated-distance trigger, lateral offset
# of the vehicle), and a ray that barely misses the post-turn segment for
# the planned spot can land deep inside it for the realized one.
DEFAULT_PLACEMENT_SLACK = 2.5


@dataclass
class DropEvent:
    s: float
    mode: str = MODE_PAIR
    ds: float = 0.0

    @property
    def landmark_count(self) -> int:
        return 1 if self.mode in (MODE_LEFT, MODE_RIGHT) else 2


@dataclass
class PullRecord:
    turn_index: int
    s_pull: float
    dp: float
    margin: float = 0.0
    outer_bound: bool = False  # True when the outer landmark's shadow bound earlier


@dataclass
class PlanReport:
    n_straight: int | None = None
    n_turns: int | None = None
    n_full: int | None = None
    n_additional: int = 0
    pulls: list[PullRecord] = field(default_factory=list)
    exceptions: list[str] = field(default_factory=list)


@dataclass
class DropSchedule:
    events: list[DropEvent]
    offset: float
    counts: dict = field(default_factory=dict)
    pulls: list[PullRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def landmark_count(self) -> int:
        return sum(e.landmark_count for e in self.events)

    def validate(self, length: float | None = None):
        prev = None
        for e in self.events:
            if e.s < -1e-9 or (length is not None and e.s > length + 1e-9):
                raise ValueError(f"drop at s={e.s} outside [0, {length}]")
            if prev is not None and e.s <= prev:
                raise ValueError("drop distances must be strictly increasing")
            if e.mode not in MODE_CODES:
                raise ValueError(f"unknown drop mode {e.mode!r}")
            prev = e.s

    def arrays(self):
        """(s, mode_code, ds) arrays for the simulation kernels."""
        s = np.array([e.s for e in self.events], dtype=float)
        codes = np.array([MODE_CODES[e.mode] for e in self.events], dtype=np.int32)
        ds = np.array([e.ds for e in self.events], dtype=float)
        return s, codes, ds


def plan_straight(length: float, d_star: float, offset: float):
    """Pair drops every d_star along a straight tunnel; count excludes the two
    known start landmarks."""
    if d_star <= 0:
        raise ValueError("drop distance must be positive")
    if length <= 0:
        raise ValueError("tunnel length must be positive")
    k = int(math.floor(length / d_star + 1e-12))
    events = [DropEvent(s=i * d_star) for i in range(1, k + 1)]
    n_straight = 2 * k
    schedule = DropSchedule(events=events, offset=offset,
                            counts={"straight": n_straight})
    return schedule, n_straight


def plan_with_turn_count(length: float, d_star: float, turn_count: int,
                         offset: float):
    """Straight-tunnel schedule plus a reserve of two landmarks per turn,
    dropped reactively while negotiating each turn (Eq.-style conservative
    upper bound; the topology is unknown so turn drops cannot be pre-placed)."""
    if turn_count < 0:
        raise ValueError("turn count must be nonnegative")
    schedule, n_straight = plan_straight(length, d_star, offset)
    n_turns = n_straight + 2 * turn_count
    schedule.counts["turns"] = n_turns
    schedule.notes.append(
        f"reserve of {2 * turn_count} landmarks; drop a pair while negotiating each turn")
    return schedule, n_turns


def materialize_turn_drops(schedule: DropSchedule,
                           topology: TunnelTopology) -> DropSchedule:
    """Runtime policy for the turn-count level: add a pair drop at each corner
    arc length (nudged earlier on collision with an existing event)."""
    events = list(schedule.events)
    taken = {round(e.s, 9) for e in events}
    for turn in topology.turns:
        s = turn.s
        while round(s, 9) in taken:
            s -= 1e-3
        events.append(DropEvent(s=s))
        taken.add(round(s, 9))
    events.sort(key=lambda e: e.s)
    return DropSchedule(events=events, offset=schedule.offset,
                        counts=dict(schedule.counts), pulls=list(schedule.pulls),
                        notes=schedule.notes + ["turn-reserve drops materialized at corners"])


def _pair_positions(topology: TunnelTopology, s: float, offset: float):
    point, heading = pose_at(topology, s)
    n = np.array([-math.sin(heading), math.cos(heading)])
    return point + offset * n, point - offset * n


def _outer_pull_arc(outer_lm, topology: TunnelTopology, turn: Turn):
    s_fr = topology.centerline[turn.index]
    s_to = topology.centerline[turn.index + 1]
    if math.hypot(outer_lm[0] - turn.inner_corner[0],
                  outer_lm[1] - turn.inner_corner[1]) < 1e-9:
        return None
    sol = ray_segment_intersection(outer_lm, turn.inner_corner, s_fr, s_to)
    if sol is None:
        return None
    return arclength_of(topology, sol.point, turn.index)


def adjust_full_topology(topology: TunnelTopology, d_star: float, offset: float,
                         pull_margin: float = DEFAULT_PULL_MARGIN,
                         placement_slack: float = DEFAULT_PLACEMENT_SLACK):
    """Full-topology drop adjustment: pull post-turn drops back to the LOS
    shadow boundary of each turn, then repair the end gap to exactly d_star.

    Returns (schedule, n_full, report). pull_margin adds a safety shift beyond
    the exact pull distance and placement_slack pessimizes the landmark
    positions used in the shadow computation; zero for both gives the
    textbook geometric pull.
    """
    length = topology.length
    base, n_straight = plan_straight(length, d_star, offset)
    events = [e.s for e in base.events]
    report = PlanReport(n_straight=n_straight,
                        n_turns=n_straight + 2 * len(topology.turns))

    for turn in topology.turns:
        before = [i for i, s in enumerate(events) if s < turn.s - 1e-9]
        idx_before = before[-1] if before else None
        s_prev = events[idx_before] if idx_before is not None else 0.0
        next_idx = (idx_before + 1) if idx_before is not None else 0
        if next_idx >= len(events):
            report.exceptions.append(
                f"turn {turn.index}: no drop after the turn; end repair covers it")
            continue
        s_next = events[next_idx]

        lm_s = s_prev if idx_before is not None else 0.0
        # known start landmarks act as the pre-turn pair when none was dropped
        lm_left, lm_right = _pair_positions(topology, lm_s, offset)
        if placement_slack > 0.0:
            point, heading = pose_at(topology, lm_s)
            path_dir = np.array([math.cos(heading), math.sin(heading)])
            normal = np.array([-path_dir[1], path_dir[0]])
            inner_dir = normal if turn.angle > 0 else -normal
            shift = placement_slack * (inner_dir - path_dir)
            lm_left = lm_left + shift
            lm_right = lm_right + shift
        res = pull_location(lm_left, lm_right, topology, turn)
        outer_lm = lm_right if turn.angle > 0 else lm_left
        s_outer = _outer_pull_arc(outer_lm, topology, turn)
        candidates = []
        if res is not None:
            candidates.append((res[1], False))
        if s_outer is not None:
            candidates.append((s_outer, True))
        if not candidates:
            continue  # pair dropped at/past the corner: no pull needed
        s_pull, outer_bound = min(candidates, key=lambda c: c[0])

        if s_pull <= s_prev + 1e-9:
            # so sharp that even the shadow boundary precedes the previous
            # drop: add a pair at the corner instead of pulling
            if abs(events[next_idx] - turn.s) > 1e-9:
                events.insert(next_idx, turn.s)
                report.n_additional += 1
            report.exceptions.append(
                f"turn {turn.index}: pull location precedes previous drop; corner pair added")
            continue

        dp = s_next - s_pull
        if dp <= 0:
            continue  # next drop already before the pull location
        margin_eff = min(pull_margin,
                         max(s_pull - turn.s - 0.5, 0.0),
                         max(s_next - s_prev - dp - 1e-6, 0.0))
        shift = dp + margin_eff
        for i in range(next_idx, len(events)):
            events[i] -= shift
        report.pulls.append(PullRecord(turn_index=turn.index, s_pull=s_pull,
                                       dp=dp, margin=margin_eff,
                                       outer_bound=outer_bound))

    # end-gap repair: inserted pairs restore spacing to exactly d_star
    anchor = events[-1] if events else 0.0
    while length - anchor > d_star + 1e-9:
        anchor += d_star
        events.append(anchor)
        report.n_additional += 1

    n_full = n_straight + 2 * report.n_additional
    report.n_full = n_full
    schedule = DropSchedule(
        events=[DropEvent(s=s) for s in events],
        offset=offset,
        counts={"straight": n_straight, "turns": report.n_turns,
                "full": n_full, "additional": report.n_additional},
        pulls=list(report.pulls),
    )
    schedule.validate(length)
    return schedule, n_full, report


def stagger_schedule(schedule: DropSchedule, mode: str, *, ds: float = 5.0,
                     d_star: float | None = None,
                     topology: TunnelTopology | None = None,
                     window: float | None = None) -> DropSchedule:
    """Staggering variants: 'half-distance' replaces each pair event with two
    alternating single drops (one at the gap midpoint, one at the event),
    preserving the landmark count; 'angled' turns pair events near a corner
    into longitudinally split pairs."""
    if mode == "half-distance":
        events = []
        prev = 0.0
        left_next = True
        for e in schedule.events:
            if e.mode != MODE_PAIR:
                raise ValueError("half-distance staggering expects pair events")
            half = prev + (e.s - prev) / 2.0
            for s in (half, e.s):
                events.append(DropEvent(
                    s=s, mode=MODE_LEFT if left_next else MODE_RIGHT))
                left_next = not left_next
            prev = e.s
        return DropSchedule(events=events, offset=schedule.offset,
                            counts=dict(schedule.counts),
                            pulls=list(schedule.pulls),
                            notes=schedule.notes + ["half-distance staggering"])
    if mode == "angled":
        if topology is None:
            raise ValueError("angled staggering needs the topology")
        if d_star is None:
            raise ValueError("angled staggering needs d_star for the window")
        if ds >= d_star / 2.0:
            raise ValueError("angled split ds must be below d_star/2")
        win = window if window is not None else 1.5 * d_star
        events = []
        for e in schedule.events:
            near_turn = any(abs(e.s - t.s) <= win for t in topology.turns)
            if near_turn and e.mode == MODE_PAIR and ds > 0.0:
                events.append(DropEvent(s=e.s, mode=MODE_ANGLED, ds=ds))
            else:
                events.append(DropEvent(s=e.s, mode=e.mode, ds=e.ds))
        return DropSchedule(events=events, offset=schedule.offset,
                            counts=dict(schedule.counts),
                            pulls=list(schedule.pulls),
                            notes=schedule.notes + [f"angled staggering ds={ds}"])
    raise ValueError(f"unknown stagger mode {mode!r}")


def verify_count_relation(report: PlanReport) -> bool:
    """Check N_straight <= N_full <= N_turns for one tunnel."""
    if report.n_straight is None or report.n_full is None or report.n_turns is None:
        raise ValueError("all three landmark counts are required")
    return report.n_straight <= report.n_full <= report.n_turns


def schedule_to_dict(schedule: DropSchedule) -> dict:
    events = []
    for e in schedule.events:
        item = {"s": e.s, "mode": e.mode}
        if e.mode == MODE_ANGLED:
            item["ds"] = e.ds
        events.append(item)
    return {
        "events": events,
        "offset": schedule.offset,
        "counts": {k: schedule.counts.get(k) for k in
                   ("straight", "turns", "full", "additional")},
        "pulls": [{"turn": p.turn_index, "dp": p.dp} for p in schedule.pulls],
    }


def schedule_from_dict(data: dict) -> DropSchedule:
    events = [DropEvent(s=float(e["s"]), mode=e.get("mode", MODE_PAIR),
                        ds=float(e.get("ds", 0.0))) for e in data["events"]]
    counts = {k: v for k, v in (data.get("counts") or {}).items() if v is not None}
    pulls = [PullRecord(turn_index=p["turn"], s_pull=0.0, dp=p["dp"])
             for p in (data.get("pulls") or [])]
    return DropSchedule(events=events, offset=float(data["offset"]),
                        counts=counts, pulls=pulls)
