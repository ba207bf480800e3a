"""Scripted crossing expert: pure-pursuit steering with time-gap yield logic.

The expert tracks the ego's reference route. Before committing to the
junction it watches every surrounding vehicle's constant-velocity motion:
if any of them would enter the yield zone (the circle inscribed in the
inflated junction box) within the time-gap threshold, the ego creeps toward
the entry line and holds just short of it. Once the ego is past the entry
line, or can no longer stop before it, it clears the box without yielding,
which avoids stalling in the middle of crossing traffic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .tracking import TrackingParams, track_path
from .vehicle import Action, VehicleParams, velocity
from .world import GoalSpec, WorldState


@dataclass(frozen=True)
class ExpertParams:
    lookahead: float = 4.0          # m, pure-pursuit lookahead
    ttc_threshold: float = 2.5      # s, reject gaps shorter than this
    creep_speed: float = 1.5        # m/s while blocked but far from the line
    v_pref: float = 6.0             # m/s cruise target
    yield_zone: float = 1.0         # m of junction-box inflation
    stop_distance: float = 5.0      # m before the entry line to hold at
    speed_kp: float = 0.5
    capture_distance: float = 3.0   # m, off-path beyond this


def time_to_circle(rel_x: float, rel_y: float, vel_x: float, vel_y: float, radius: float) -> float:
    """Earliest t >= 0 at which a constant-velocity point is within `radius`
    of the origin; 0.0 if already inside, inf if never."""
    c = rel_x * rel_x + rel_y * rel_y - radius * radius
    if c <= 0.0:
        return 0.0
    a = vel_x * vel_x + vel_y * vel_y
    if a == 0.0:
        return math.inf
    b = 2.0 * (rel_x * vel_x + rel_y * vel_y)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return math.inf
    t = (-b - math.sqrt(disc)) / (2.0 * a)
    return t if t >= 0.0 else math.inf


class ExpertController:
    """Episode-loop controller wrapping the scripted expert."""

    def __init__(self, params: ExpertParams, vparams: VehicleParams) -> None:
        self.params = params
        self.vparams = vparams
        self.tracking = TrackingParams(
            lookahead=params.lookahead,
            speed_kp=params.speed_kp,
            capture_distance=params.capture_distance,
        )
        self.off_path = False

    def _gap_rejected(self, world: WorldState) -> bool:
        radius = world.layout.junction_half + self.params.yield_zone
        for agent in world.surrounding:
            vx, vy = velocity(agent)
            t = time_to_circle(agent.position.x, agent.position.y, vx, vy, radius)
            if t < self.params.ttc_threshold:
                return True
        return False

    def _target_speed(self, world: WorldState) -> float:
        route = world.ego_route
        ego = world.ego
        s, _ = route.path.project(ego.position.x, ego.position.y)
        dist_to_entry = route.entry_s - s
        if dist_to_entry <= 0.0:
            return self.params.v_pref  # inside or past the box: clear it
        stopping = ego.speed**2 / (2.0 * self.vparams.b_max)
        if dist_to_entry <= stopping + 0.3:
            return self.params.v_pref  # cannot brake in time, commit
        if self._gap_rejected(world):
            return 0.0 if dist_to_entry <= self.params.stop_distance else self.params.creep_speed
        return self.params.v_pref

    def act(self, world: WorldState, goal: GoalSpec, command, obs=None) -> Action:
        result = track_path(world.ego, world.ego_route.path, self._target_speed(world),
                            self.tracking, self.vparams)
        self.off_path = not result.on_path
        return result.action


def expert_control(world: WorldState, params: ExpertParams, vparams: VehicleParams) -> Action:
    """One-shot expert action for the current world state."""
    return ExpertController(params, vparams).act(world, None, None)
