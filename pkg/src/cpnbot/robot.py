"""The humanoid-robot control net and the host functions it calls.

Four pages:

* ``Humanoid-Robot`` (root): three substitution transitions plus
  ``Send-Motor-Motion-Instruction``.
* ``Tilt-Sensor``: gyroscope/accelerometer read and the fusion step.
* ``Image-Processing``: stabilization, target and floor detection, position
  estimate and the balance/way decision.
* ``Robot-Motors``: one place per servo and the transition that dispatches
  Dynamixel packets to them.

The decision functions (``balance_and_way``, ``approximate_position``, the
motion table) are deterministic stand-ins: they give every place a concrete
value so the net can be simulated and model-checked.

Canonical names for places that appear under several spellings:

=====================================  =======================================
name used here                         also written as
=====================================  =======================================
Final-Calculated-Coordinates           Final Calculated Coordinate
Dynamixel-Motor-Running-Instruction    Dynamixel Motors Running Motion
Filtered-Coordinate (root socket)      Filtered Coordination (tilt-page port)
=====================================  =======================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from . import colorsets as cs
from . import dynamixel
from .colorsets import Lst, Rec
from .inscription import BUILTINS, HostFn, HostFnRegistry, TypeMismatch, parse_expr
from .net import Arc, HierNet, Page, PlaceDecl, Substitution, TransitionDecl

ROOT_PAGE = "Humanoid-Robot"
TILT_PAGE = "Tilt-Sensor"
IMAGE_PAGE = "Image-Processing"
MOTORS_PAGE = "Robot-Motors"

NEUTRAL = 512
HEAD_MOTORS = (19, 20)
UPPER_BODY = tuple(range(1, 7))
LOWER_BODY = tuple(range(7, 19))

HALT, FORWARD, BACKWARD, TURN_LEFT, TURN_RIGHT, SIDE_LEFT, SIDE_RIGHT, BALANCE_RECOVER = range(8)
INSTRUCTION_NAMES = (
    "halt",
    "forward",
    "backward",
    "turn-left",
    "turn-right",
    "side-left",
    "side-right",
    "balance-recover",
)

# Goal positions (0..1023) for motors 1..20 per instruction code.
# Placeholder gait poses around the neutral 512; only the motor groups an
# instruction concerns move: legs 7-18 for locomotion, head 19-20 for the
# turn codes that search for a target, arms 1-6 only for balance recovery.
DEFAULT_MOTIONS = {
    0: (512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512, 512),
    1: (512, 512, 512, 512, 512, 512, 552, 472, 552, 472, 592, 432, 592, 432, 632, 392, 632, 392, 512, 512),
    2: (512, 512, 512, 512, 512, 512, 472, 552, 472, 552, 432, 592, 432, 592, 392, 632, 392, 632, 512, 512),
    3: (512, 512, 512, 512, 512, 512, 536, 488, 536, 488, 560, 464, 560, 464, 584, 440, 584, 440, 384, 576),
    4: (512, 512, 512, 512, 512, 512, 488, 536, 488, 536, 464, 560, 464, 560, 440, 584, 440, 584, 640, 576),
    5: (512, 512, 512, 512, 512, 512, 544, 480, 544, 480, 576, 448, 576, 448, 608, 416, 608, 416, 512, 512),
    6: (512, 512, 512, 512, 512, 512, 480, 544, 480, 544, 448, 576, 448, 576, 416, 608, 416, 608, 512, 512),
    7: (608, 416, 608, 416, 608, 416, 560, 464, 560, 464, 608, 416, 608, 416, 656, 368, 656, 368, 512, 512),
}


@dataclass(frozen=True)
class RobotModelConfig:
    axis_max: int = 330
    camera_grid_x: int = 8
    camera_grid_y: int = 6
    motor_count: int = 20
    instruction_code_count: int = 8
    reduction_preset: bool = False

    def __post_init__(self):
        if self.reduction_preset:
            object.__setattr__(self, "axis_max", 2)
            object.__setattr__(self, "camera_grid_x", 2)
            object.__setattr__(self, "camera_grid_y", 2)
        if self.axis_max < 1:
            raise ValueError("axis_max must be >= 1")
        if self.camera_grid_x < 1 or self.camera_grid_y < 1:
            raise ValueError("camera grid dimensions must be >= 1")
        if not 1 <= self.motor_count <= 20:
            raise ValueError("motor_count must be in 1..20")
        if self.instruction_code_count != len(INSTRUCTION_NAMES):
            raise ValueError(f"instruction_code_count must be {len(INSTRUCTION_NAMES)}")

    @classmethod
    def reduced(cls) -> RobotModelConfig:
        return cls(reduction_preset=True)


class GyroReading(NamedTuple):
    yaws: int
    pitches: int
    rolls: int


class AccelReading(NamedTuple):
    x_ac: int
    y_ac: int
    z_ac: int


class FilteredTriple(NamedTuple):
    a: int
    b: int
    c: int


class TargetPosition(NamedTuple):
    x: int
    y: int

    @property
    def found(self) -> bool:
        return (self.x, self.y) != (0, 0)


NOT_FOUND = TargetPosition(0, 0)


# ---------------------------------------------------------------- decision functions


def kalman_average(g: GyroReading, a: AccelReading) -> FilteredTriple:
    """Componentwise floor average of the two sensor readings."""
    return FilteredTriple((g[0] + a[0]) // 2, (g[1] + a[1]) // 2, (g[2] + a[2]) // 2)


def approximate_position(floor_edge_row: int, cam: tuple[int, int], grid_y: int = 6) -> tuple[int, int]:
    # a floor edge low in the frame means the robot stands near the far rows
    return (cam[0], max(1, min(grid_y, grid_y + 1 - floor_edge_row)))


def balance_and_way(
    target: tuple[int, int],
    pos: tuple[int, int],
    ctrl: int,
    f: tuple[int, int, int] | None,
    axis_max: int = 330,
) -> int:
    """Next instruction code.

    Tilt beyond a quarter range from the midpoint forces balance recovery;
    otherwise a halt command wins, a missing target triggers a search turn,
    and a found target is approached or turned toward.
    """
    if f is not None:
        mid = math.ceil(axis_max / 2)
        limit = math.ceil(axis_max / 4)
        if any(abs(x - mid) > limit for x in f):
            return BALANCE_RECOVER
    if ctrl == HALT:
        return HALT
    if tuple(target) == (0, 0):
        return TURN_LEFT
    if abs(target[0] - pos[0]) <= 1:
        return FORWARD
    return TURN_LEFT if target[0] < pos[0] else TURN_RIGHT


def target_cell(k: int, grid_x: int) -> tuple[int, int]:
    """Map a detector outcome 0..X*Y to the not-found sentinel or a grid cell."""
    if k == 0:
        return (0, 0)
    return ((k - 1) % grid_x + 1, (k - 1) // grid_x + 1)


def default_motion(code: int) -> tuple[int, ...]:
    return DEFAULT_MOTIONS[code]


def motor_ids_text(count: int) -> str:
    return ",".join(str(i) for i in range(1, count + 1))


def motion_packets(ids_text: str, positions) -> list[str]:
    """Goal-position packets (hex) for each listed motor id."""
    ids = [int(x) for x in ids_text.split(",") if x.strip()]
    return [dynamixel.to_hex(dynamixel.goal_position_packet(i, positions[i - 1])) for i in ids]


# ---------------------------------------------------------------- host-function adapters


def _rec3(v, names):
    if not isinstance(v, Rec):
        raise TypeMismatch("record", v)
    return tuple(v[n] for n in names)


def _kalman(g, a):
    return tuple(
        kalman_average(
            GyroReading(*_rec3(g, GyroReading._fields)),
            AccelReading(*_rec3(a, AccelReading._fields)),
        )
    )


def _balance(t, pos, ctrl, fl, axis_max):
    if not isinstance(fl, Lst):
        raise TypeMismatch("list", fl)
    f = fl.items[-1] if fl.items else None
    return balance_and_way(t, pos, ctrl, f, axis_max)


def _approx(r, cam, grid_y):
    return approximate_position(r, cam, grid_y)


def _packets(ids, data):
    if not isinstance(data, Lst):
        raise TypeMismatch("list", data)
    return Lst(tuple(motion_packets(ids, data.items)))


ROBOT_FUNCTIONS = BUILTINS.extended(
    {
        "kalman": HostFn(2, True, _kalman),
        "balance": HostFn(5, True, _balance),
        "approx_pos": HostFn(3, True, _approx),
        "target_cell": HostFn(2, True, target_cell),
        "motion_packets": HostFn(2, True, _packets),
    }
)


def registry() -> HostFnRegistry:
    return ROBOT_FUNCTIONS


# ---------------------------------------------------------------- net construction


def _colorsets(cfg: RobotModelConfig) -> dict:
    out: dict = {}

    def add(decl):
        out[decl.name] = decl
        return decl

    axis = add(cs.IntRange(1, cfg.axis_max, name="axis"))
    fc = add(cs.Product((axis, axis, axis), name="filtered_coordinate"))
    add(cs.ListOf(fc, 1, name="f_coordinate"))
    angle = add(cs.IntRange(1, cfg.axis_max, name="Angle"))
    add(cs.Record((("yaws", angle), ("pitches", angle), ("rolls", angle)), name="Coordinate_g"))
    acc = add(cs.IntRange(1, cfg.axis_max, name="Acc"))
    add(cs.Record((("x_ac", acc), ("y_ac", acc), ("z_ac", acc)), name="Coordinate_ac"))
    add(cs.Unit(name="LOCK"))
    add(cs.IntRange(1, cfg.camera_grid_y, name="Frame"))
    gx = add(cs.IntRange(1, cfg.camera_grid_x, name="GridX"))
    gy = add(cs.IntRange(1, cfg.camera_grid_y, name="GridY"))
    add(cs.Product((gx, gy), name="Cell"))
    tx = add(cs.IntRange(0, cfg.camera_grid_x, name="TargetX"))
    ty = add(cs.IntRange(0, cfg.camera_grid_y, name="TargetY"))
    add(cs.Product((tx, ty), name="Target"))
    add(cs.Text(name="TargetInfo"))
    instr = add(cs.IntRange(0, cfg.instruction_code_count - 1, name="Instruction"))
    add(cs.IntRange(-1, cfg.instruction_code_count - 1, name="CalcCode"))
    position = add(cs.IntRange(0, 1023, name="Position"))
    motion = add(cs.ListOf(position, 20, name="Motion"))
    add(cs.Product((instr, motion), name="MotionEntry"))
    add(cs.Text(name="MotorIds"))
    packet = add(cs.Text(name="DxlPacket"))
    add(cs.ListOf(packet, 20, name="DxlBatch"))
    return out


def _variables(cfg: RobotModelConfig) -> dict:
    v = {
        "g": "Coordinate_g",
        "a": "Coordinate_ac",
        "fl": "f_coordinate",
        "c": "Frame",
        "p": "Frame",
        "r": "Frame",
        "t": "Target",
        "ti": "TargetInfo",
        "cam": "Cell",
        "pos": "Cell",
        "ctrl": "Instruction",
        "prev": "Instruction",
        "code": "Instruction",
        "calc": "CalcCode",
        "data": "Motion",
        "ids": "MotorIds",
        "pending": "DxlBatch",
        "batch": "DxlBatch",
    }
    for i in range(1, cfg.motor_count + 1):
        v[f"m{i}"] = "DxlPacket"
    return v


def _place(name, colorset, init=None, port=None):
    return PlaceDecl(name, colorset, parse_expr(init) if init is not None else None, port)


def _trans(name, guard=None, inputs=(), outputs=()):
    return TransitionDecl(
        name,
        parse_expr(guard) if guard else None,
        tuple(Arc(p, parse_expr(e)) for p, e in inputs),
        tuple(Arc(p, parse_expr(e)) for p, e in outputs),
    )


def _root_page(cfg: RobotModelConfig) -> Page:
    table = " ++ ".join(
        f"1`({code}, [{', '.join(map(str, DEFAULT_MOTIONS[code][: cfg.motor_count]))}])"
        for code in range(cfg.instruction_code_count)
    )
    places = (
        _place("Filtered-Coordinate", "f_coordinate", "1`[]"),
        _place("Final-Calculated-Coordinates", "CalcCode", "1`~1"),
        _place("Motor-Numbers", "MotorIds", f'1`"{motor_ids_text(cfg.motor_count)}"'),
        _place("Motor-Instructions-Default-Motions", "MotionEntry", table),
        _place("Final-Controlling-Instruction-and-Motion", "Instruction", f"1`{HALT}"),
        _place("Dynamixel-Motor-Running-Instruction", "DxlBatch", "1`[]"),
    )
    send = _trans(
        "Send-Motor-Motion-Instruction",
        "code = calc andalso pending = []",
        inputs=(
            ("Final-Calculated-Coordinates", "calc"),
            ("Final-Controlling-Instruction-and-Motion", "prev"),
            ("Motor-Instructions-Default-Motions", "(code, data)"),
            ("Motor-Numbers", "ids"),
            ("Dynamixel-Motor-Running-Instruction", "pending"),
        ),
        outputs=(
            ("Final-Calculated-Coordinates", "~1"),
            ("Final-Controlling-Instruction-and-Motion", "code"),
            ("Motor-Instructions-Default-Motions", "(code, data)"),
            ("Motor-Numbers", "ids"),
            ("Dynamixel-Motor-Running-Instruction", "motion_packets(ids, data)"),
        ),
    )
    substs = (
        Substitution("Gyroscope-and-Accelerometer", TILT_PAGE, (("Filtered-Coordinate", "Filtered-Coordination"),)),
        Substitution(
            "Image-Processing",
            IMAGE_PAGE,
            (
                ("Filtered-Coordinate", "Filtered-Coordinate"),
                ("Final-Calculated-Coordinates", "Final-Calculated-Coordinates"),
            ),
        ),
        Substitution(
            "Send-Data-to-Run",
            MOTORS_PAGE,
            (("Dynamixel-Motor-Running-Instruction", "Dynamixel-Motor-Running-Instruction"),),
        ),
    )
    return Page(ROOT_PAGE, places, (send,), substs)


def _tilt_page(cfg: RobotModelConfig) -> Page:
    n = cfg.axis_max
    gyro = f"{{yaws=uniform(1, {n}), pitches=uniform(1, {n}), rolls=uniform(1, {n})}}"
    accel = f"{{x_ac=uniform(1, {n}), y_ac=uniform(1, {n}), z_ac=uniform(1, {n})}}"
    places = (
        _place("Gyroscope-Sensor", "Coordinate_g", f"1`{gyro}"),
        _place("Accelerometer-Sensor", "Coordinate_ac", f"1`{accel}"),
        _place("Gyroscope-Data", "Coordinate_g"),
        _place("Accelerometer-Data", "Coordinate_ac"),
        _place("Place-Number", "LOCK", "1`()"),
        _place("Filtered-Coordination", "f_coordinate", port="io"),
    )
    # The sensor token stays put; each read draws a fresh sample into the data
    # places, so no unread sample is carried through the image cycle.
    read = _trans(
        "Gyroscope-and-Accelerometer",
        "fl = []",
        inputs=(
            ("Gyroscope-Sensor", "g"),
            ("Accelerometer-Sensor", "a"),
            ("Place-Number", "()"),
            ("Filtered-Coordination", "fl"),
        ),
        outputs=(
            ("Gyroscope-Data", gyro),
            ("Accelerometer-Data", accel),
            ("Filtered-Coordination", "fl"),
            ("Gyroscope-Sensor", "g"),
            ("Accelerometer-Sensor", "a"),
        ),
    )
    fuse = _trans(
        "Kalman-Filtering",
        inputs=(
            ("Gyroscope-Data", "g"),
            ("Accelerometer-Data", "a"),
            ("Filtered-Coordination", "fl"),
        ),
        outputs=(
            ("Filtered-Coordination", "[kalman(g, a)]"),
            ("Place-Number", "()"),
        ),
    )
    return Page(TILT_PAGE, places, (read, fuse))


def _image_page(cfg: RobotModelConfig) -> Page:
    gx, gy = cfg.camera_grid_x, cfg.camera_grid_y
    codes = cfg.instruction_code_count
    places = (
        _place("Camera", "Frame", f"1`uniform(1, {gy})"),
        _place("Picture", "Frame"),
        _place("Lock-Target-Detection", "LOCK", "1`()"),
        _place("Lock-Floor-Detection", "LOCK", "1`()"),
        _place("Target-Information", "TargetInfo", '1`"orange-ball"'),
        _place("Target-Position", "Target"),
        _place("Detected-Floor-Picture", "Frame"),
        _place("Head-Camera-Position", "Cell", f"1`({(gx + 1) // 2}, {(gy + 1) // 2})"),
        _place("Robot-Approximate-Position-in-floor", "Cell"),
        _place("Controlling-Instruction", "Instruction", f"1`uniform(0, {codes - 1})"),
        _place("Filtered-Coordinate", "f_coordinate", port="io"),
        _place("Final-Calculated-Coordinates", "CalcCode", port="io"),
    )
    transitions = (
        _trans(
            "Anti-Image-Vibration-Filtering",
            "fl <> []",
            inputs=(("Camera", "c"), ("Filtered-Coordinate", "fl")),
            outputs=(("Picture", "c"), ("Filtered-Coordinate", "fl")),
        ),
        _trans(
            "Target-Detection",
            inputs=(("Lock-Target-Detection", "()"), ("Picture", "p"), ("Target-Information", "ti")),
            outputs=(
                ("Picture", "p"),
                ("Target-Information", "ti"),
                ("Target-Position", f"target_cell(uniform(0, {gx * gy}), {gx})"),
            ),
        ),
        _trans(
            "Floor-Detection",
            inputs=(("Lock-Floor-Detection", "()"), ("Picture", "p")),
            outputs=(("Picture", "p"), ("Detected-Floor-Picture", "p")),
        ),
        _trans(
            "Image-Processing",
            inputs=(
                ("Picture", "p"),
                ("Detected-Floor-Picture", "r"),
                ("Head-Camera-Position", "cam"),
                ("Target-Position", "t"),
            ),
            outputs=(
                ("Head-Camera-Position", "cam"),
                ("Target-Position", "t"),
                ("Robot-Approximate-Position-in-floor", f"approx_pos(r, cam, {gy})"),
                ("Lock-Target-Detection", "()"),
                ("Lock-Floor-Detection", "()"),
            ),
        ),
        _trans(
            "Calculate-Humanoid-Robot-Balance-and-Way",
            "calc = ~1",
            inputs=(
                ("Target-Position", "t"),
                ("Robot-Approximate-Position-in-floor", "pos"),
                ("Controlling-Instruction", "ctrl"),
                ("Filtered-Coordinate", "fl"),
                ("Final-Calculated-Coordinates", "calc"),
            ),
            outputs=(
                ("Final-Calculated-Coordinates", f"balance(t, pos, ctrl, fl, {cfg.axis_max})"),
                ("Filtered-Coordinate", "[]"),
                ("Controlling-Instruction", f"uniform(0, {codes - 1})"),
                ("Camera", f"uniform(1, {gy})"),
            ),
        ),
    )
    return Page(IMAGE_PAGE, places, transitions)


def motor_place(i: int) -> str:
    return f"Motor-{i}"


def _motors_page(cfg: RobotModelConfig) -> Page:
    n = cfg.motor_count
    places = tuple(
        _place(motor_place(i), "DxlPacket", f'1`"{dynamixel.to_hex(dynamixel.goal_position_packet(i, NEUTRAL))}"')
        for i in range(1, n + 1)
    ) + (_place("Dynamixel-Motor-Running-Instruction", "DxlBatch", port="io"),)
    dispatch = _trans(
        "Send-instruction-to-Motors",
        "batch <> []",
        inputs=(("Dynamixel-Motor-Running-Instruction", "batch"),)
        + tuple((motor_place(i), f"m{i}") for i in range(1, n + 1)),
        outputs=(("Dynamixel-Motor-Running-Instruction", "[]"),)
        + tuple((motor_place(i), f"nth(batch, {i - 1})") for i in range(1, n + 1)),
    )
    return Page(MOTORS_PAGE, places, (dispatch,))


def build_robot_model(cfg: RobotModelConfig = RobotModelConfig()) -> HierNet:
    pages = {
        ROOT_PAGE: _root_page(cfg),
        TILT_PAGE: _tilt_page(cfg),
        IMAGE_PAGE: _image_page(cfg),
        MOTORS_PAGE: _motors_page(cfg),
    }
    return HierNet(_colorsets(cfg), _variables(cfg), pages, ROOT_PAGE, ROBOT_FUNCTIONS)


def motor_places(page: Page) -> list[PlaceDecl]:
    return [p for p in page.places if p.name.startswith("Motor-") and not p.port]
