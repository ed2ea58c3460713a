"""Home-care robot case study: model generator and default study.

A robot and a human share a grid with one recharging cell.  A scheduler
alternates turns: the robot moves (or stays) and then the human moves at
random.  One time unit of the servicing limit is one robot+human round, so
a limit of ``t`` becomes a ``2 t`` step bound on the until formula.
"""
from __future__ import annotations

from dataclasses import dataclass

from .fuzzy import PRESETS, TNorm, VagueRequirement
from .lattice import DesignDimension

RISK_TABLE = (1, 2, 4, 8, 13, 25)
TIME_LIMITS = tuple(range(1, 11))
SPEED_LIMITS = tuple(range(1, 7))
ENERGY_MARGINS = (1, 2, 3, 4, 5, 10, 15, 20, 25)
QUERY = 'Pmax=? [ !"service" U "service" ]'
STEPS_PER_ROUND = 2

DIRECTIONS = {"n": (0, 1), "s": (0, -1), "e": (1, 0), "w": (-1, 0)}

# robot displacement of a choice; zero for human moves and for staying
DISPLACEMENT = "max(next(rx)-rx, rx-next(rx)) + max(next(ry)-ry, ry-next(ry))"
SPEED_CONSTRAINT = f"{DISPLACEMENT} <= $v"
ENERGY_CONSTRAINT = f"({DISPLACEMENT} = 0) | (b - C*({DISPLACEMENT}) >= B - $v)"


class InvalidParams(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class HomecareParams:
    grid_w: int = 5
    grid_h: int = 5
    charger: tuple[int, int] = (0, 0)
    robot_init: tuple[int, int] = (0, 0)
    human_init: tuple[int, int] = (4, 4)
    battery_capacity: int = 25
    max_speed: int = 6
    human_move_prob: float = 0.2
    service_distance: int = 1
    energy_cost_per_cell: int = 1

    def check(self) -> None:
        if self.grid_w < 1 or self.grid_h < 1:
            raise InvalidParams("grid dimensions must be positive")
        if self.grid_w * self.grid_h < 2:
            raise InvalidParams("grid needs at least two cells for robot and human")
        for name in ("charger", "robot_init", "human_init"):
            x, y = getattr(self, name)
            if not (0 <= x < self.grid_w and 0 <= y < self.grid_h):
                raise InvalidParams(f"{name} {(x, y)} outside the {self.grid_w}x{self.grid_h} grid")
        if tuple(self.robot_init) == tuple(self.human_init):
            raise InvalidParams("robot and human must start in different cells")
        if not 0 <= 4 * self.human_move_prob <= 1:
            raise InvalidParams("human_move_prob must lie in [0, 0.25]")
        if self.max_speed < 1:
            raise InvalidParams("max_speed must be at least 1")
        if self.energy_cost_per_cell < 0:
            raise InvalidParams("energy_cost_per_cell must be nonnegative")
        if self.battery_capacity < 1 or self.battery_capacity < self.energy_cost_per_cell:
            raise InvalidParams("battery must hold at least the cost of a one-cell move")
        if self.service_distance < 1:
            raise InvalidParams("service_distance must be at least 1")


def risk(v: int, table: tuple[float, ...] = RISK_TABLE) -> float:
    """Collision-risk points of a speed limit ``v`` (1-based into ``table``)."""
    if len(table) < 5:
        raise ValueError("risk table needs entries for speeds 1..5 at least")
    if not (table[2] < 5 and table[4] > 10 and all(1 <= r <= 25 for r in table)):
        raise ValueError("risk table must have risk(3) < 5, risk(5) > 10 and values in [1, 25]")
    if not 1 <= v <= len(table):
        raise OutOfRange(f"speed limit {v} outside 1..{len(table)}")
    return float(table[v - 1])


def _prob(p: float) -> str:
    return repr(round(p, 12))


def _move_label(d: str, k: int, charging: bool) -> str:
    return f"{d}{k}_chg" if charging else f"{d}{k}"


def generate_model(p: HomecareParams = HomecareParams()) -> str:
    """Model text with scheduler, robot, human, battery and service modules."""
    p.check()
    W, H = p.grid_w, p.grid_h
    cx, cy = p.charger
    moves = []  # (label, direction, speed, lands_on_charger)
    for d in DIRECTIONS:
        for k in range(1, p.max_speed + 1):
            moves.append((_move_label(d, k, False), d, k, False))
            moves.append((_move_label(d, k, True), d, k, True))

    def target(d: str, k: int) -> tuple[str, str]:
        dx, dy = DIRECTIONS[d]
        tx = "rx" if dx == 0 else f"rx{'+' if dx > 0 else '-'}{k}"
        ty = "ry" if dy == 0 else f"ry{'+' if dy > 0 else '-'}{k}"
        return tx, ty

    out = [
        "// home-care robot: robot and human alternate moves on a grid with a charger",
        "mdp",
        "",
        f"const int W = {W};",
        f"const int H = {H};",
        f"const int B = {p.battery_capacity};",
        f"const int C = {p.energy_cost_per_cell};",
        f"const int CX = {cx};",
        f"const int CY = {cy};",
        f"const int D = {p.service_distance};",
        "",
        "module scheduler",
        "  turn : [0..1] init 0;",
        "  [stay] turn=0 -> (turn'=1);",
    ]
    out += [f"  [{lab}] turn=0 -> (turn'=1);" for lab, *_ in moves]
    out += ["  [hmove] turn=1 -> (turn'=0);", "endmodule", ""]

    rx0, ry0 = p.robot_init
    out += [
        "module robot",
        f"  rx : [0..W-1] init {rx0};",
        f"  ry : [0..H-1] init {ry0};",
        "  [stay] true -> true;",
    ]
    for lab, d, k, chg in moves:
        tx, ty = target(d, k)
        dx, dy = DIRECTIONS[d]
        inside = {(1, 0): f"{tx}<=W-1", (-1, 0): f"{tx}>=0", (0, 1): f"{ty}<=H-1", (0, -1): f"{ty}>=0"}[(dx, dy)]
        on_charger = f"{tx}=CX & {ty}=CY"
        guard = f"{inside} & !({tx}=hx & {ty}=hy) & " + (on_charger if chg else f"!({on_charger})")
        upd = f"(rx'={tx})" if dx else f"(ry'={ty})"
        out.append(f"  [{lab}] {guard} -> {upd};")
    out += ["endmodule", ""]

    hx0, hy0 = p.human_init
    out += ["module human", f"  hx : [0..W-1] init {hx0};", f"  hy : [0..H-1] init {hy0};"]
    q = p.human_move_prob
    for x in range(W):
        for y in range(H):
            nbrs = [(x + dx, y + dy) for dx, dy in DIRECTIONS.values() if 0 <= x + dx < W and 0 <= y + dy < H]
            here = f"hx={x} & hy={y}"
            # one command for "robot not adjacent", one per neighbour cell the robot may block
            cases = [(None, " & ".join([here] + [f"!(rx={nx} & ry={ny})" for nx, ny in nbrs]))]
            cases += [((nx, ny), f"{here} & rx={nx} & ry={ny}") for nx, ny in nbrs]
            for blocked, guard in cases:
                free = [c for c in nbrs if c != blocked]
                stay = 1.0 - q * len(free)
                branches = []
                for nx, ny in free:
                    upd = f"(hx'={nx})" if nx != x else f"(hy'={ny})"
                    branches.append(f"{_prob(q)}:{upd}")
                if stay > 1e-12:
                    branches.append(f"{_prob(stay)}:true")
                out.append(f"  [hmove] {guard} -> {' + '.join(branches)};")
    out += ["endmodule", ""]

    out += ["module battery", "  b : [0..B] init B;"]
    for lab, d, k, chg in moves:
        cost = k * p.energy_cost_per_cell
        upd = "(b'=B)" if chg else f"(b'=b-{cost})"
        out.append(f"  [{lab}] b>={cost} -> {upd};")
    out += ["endmodule", ""]

    dist = "max(rx-hx, hx-rx) + max(ry-hy, hy-ry)"
    out += [
        "module service",
        "  attended : bool init false;",
        f"  [hmove] true -> (attended'=attended | {dist}<=D);",
        "endmodule",
        "",
        f'label "service" = {dist}<=D;',
        'label "charger" = rx=CX & ry=CY;',
        'label "robot_turn" = turn=0;',
    ]
    return "\n".join(out) + "\n"


def default_dimensions(risk_table: tuple[float, ...] = RISK_TABLE) -> tuple[DesignDimension, ...]:
    return (
        DesignDimension("t", "horizon", TIME_LIMITS),
        DesignDimension(
            "v", "action_guard", SPEED_LIMITS, SPEED_CONSTRAINT,
            feature=tuple(risk(v, risk_table) for v in SPEED_LIMITS),
        ),
        DesignDimension("e", "state_guard", ENERGY_MARGINS, ENERGY_CONSTRAINT),
    )


def default_requirements(risk_shape: str = "sigmoid", time_shape: str = "very_fast") -> tuple[VagueRequirement, ...]:
    return (
        VagueRequirement("risk", PRESETS[risk_shape], "v"),
        VagueRequirement("time", PRESETS[time_shape], "t"),
        VagueRequirement("energy", PRESETS["energy"], "e"),
    )


def default_study(p: HomecareParams = HomecareParams(), risk_shape: str = "sigmoid", time_shape: str = "very_fast"):
    from .explorer import StudyConfig

    p.check()
    return StudyConfig(
        model="casestudy",
        query=QUERY,
        rho=0.9,
        dimensions=default_dimensions(),
        requirements=default_requirements(risk_shape, time_shape),
        tnorm=TNorm("min"),
        horizon_scale=STEPS_PER_ROUND,
        casestudy_params=p,
    )
