"""Plan language: canonical steps, templates, executable-instruction
generation, and the Exact Match metric."""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass

import numpy as np

VERBS = ("move to", "pick", "place")

GT_MIN_STEPS = 4
GT_MAX_STEPS = 8


class ParseError(ValueError):
    def __init__(self, message: str, step_index: int):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index


@dataclass(frozen=True)
class PlanStep:
    """One canonical step: '<verb> <argument>', lowercase, single-spaced."""

    text: str

    def __post_init__(self):
        t = self.text
        if t != t.strip() or t != t.lower() or "  " in t:
            raise ValueError(f"step not in canonical form: {t!r}")
        if not any(t.startswith(v + " ") for v in VERBS):
            raise ValueError(f"step has no known verb: {t!r}")

    @property
    def verb(self) -> str:
        for v in sorted(VERBS, key=len, reverse=True):
            if self.text.startswith(v + " "):
                return v
        raise AssertionError("unreachable: validated in __post_init__")

    @property
    def argument(self) -> str:
        return self.text[len(self.verb) + 1 :]


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...]

    def render(self) -> str:
        return ", ".join(s.text for s in self.steps)

    def __len__(self) -> int:
        return len(self.steps)


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().lower()


def parse_plan(text: str) -> Plan:
    """Parse a comma-separated plan string.

    Each step is trimmed, lowercased and whitespace-normalized; the
    argument text is otherwise preserved verbatim. Empty input parses to
    the empty plan.
    """
    if not text.strip():
        return Plan(())
    steps = []
    for i, raw in enumerate(text.split(",")):
        norm = _normalize(raw)
        if not any(norm.startswith(v + " ") for v in VERBS):
            raise ParseError(f"unknown verb in {norm!r}", i)
        steps.append(PlanStep(norm))
    return Plan(tuple(steps))


def exact_match(pred: Plan, gt: Plan) -> tuple[float, list[int]]:
    """Per-plan Exact Match accuracy and per-step indicators.

    A predicted step counts iff it is string-equal to the ground-truth
    step at the same index. The denominator is always the ground-truth
    length; predicted steps beyond it neither score nor penalize. Returns
    (accuracy, indicators) with one 0/1 indicator per ground-truth step.
    """
    if len(gt) == 0:
        raise ValueError("ground-truth plan must be non-empty")
    indicators = []
    for j, gstep in enumerate(gt.steps):
        hit = j < len(pred.steps) and pred.steps[j].text == gstep.text
        indicators.append(1 if hit else 0)
    return sum(indicators) / len(gt), indicators


def exact_match_corpus(pairs: list[tuple[Plan, Plan]]) -> float:
    """Mean of per-plan Exact Match accuracies over a corpus."""
    if not pairs:
        raise ValueError("empty corpus")
    return sum(exact_match(p, g)[0] for p, g in pairs) / len(pairs)


# ---------------------------------------------------------------------------
# Templates and instruction generation


@dataclass(frozen=True)
class InstructionTemplate:
    """Instruction pattern with typed slots and a matching plan pattern.

    Slots: {obj}, and zone slots {z1}, {z2}, {z3} (distinct zones). Every
    slot appearing in the plan pattern must appear in the instruction
    pattern, except {z1} which may be implicit (the object's current
    zone).
    """

    id: str
    instruction: str
    plan_steps: tuple[str, ...]

    def __post_init__(self):
        inst_slots = set(re.findall(r"\{(\w+)\}", self.instruction))
        plan_slots = set()
        for s in self.plan_steps:
            plan_slots |= set(re.findall(r"\{(\w+)\}", s))
        # z1 is the object's start zone and may be implicit in the text.
        if not plan_slots - {"z1"} <= inst_slots | {"obj"}:
            raise ValueError(f"template {self.id}: plan slot missing from instruction")
        if not (GT_MIN_STEPS <= len(self.plan_steps) <= GT_MAX_STEPS):
            raise ValueError(f"template {self.id}: plan length outside [4, 8]")


@dataclass(frozen=True)
class InstructionRecord:
    id: str
    instruction: str
    gt_plan: Plan
    scene_id: str
    scene_description: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "instruction": self.instruction,
                "plan": [s.text for s in self.gt_plan.steps],
            },
            sort_keys=False,
        )


def builtin_templates() -> list[InstructionTemplate]:
    """Reconstructed template library.

    The benchmark's original 58 templates are not published; this library
    spans the same verb set and 4-8 step plan range and is clearly a
    reconstruction, not the original list.
    """
    mv, pk, pl = "move to the {} zone", "pick the {obj}", "place the {obj}"
    t = []

    def add(tid, instruction, steps):
        t.append(InstructionTemplate(tid, instruction, tuple(steps)))

    base = [mv.format("{z1}"), pk, mv.format("{z2}"), pl]
    add("t01", "Move the {obj} to the {z2} zone.", base)
    add("t02", "Take the {obj} from the {z1} zone to the {z2} zone.", base)
    add("t03", "Bring the {obj} to the {z2} zone.", base)
    add("t04", "Put the {obj} in the {z2} zone.", base)
    add("t05", "Carry the {obj} over to the {z2} zone.", base)
    add("t06", "Please move the {obj} to the {z2} zone.", base)
    add("t07", "Pick up the {obj} and place it in the {z2} zone.", base)
    add("t08", "Grab the {obj} from the {z1} zone and drop it off at the {z2} zone.", base)

    five = base + [mv.format("{z3}")]
    add("t09", "Move the {obj} to the {z2} zone, then go to the {z3} zone.", five)
    add("t10", "Deliver the {obj} to the {z2} zone and wait at the {z3} zone.", five)
    add("t11", "Put the {obj} in the {z2} zone and return to the {z3} zone.", five)

    six = [mv.format("{z1}"), pk, mv.format("{z2}"), pl, mv.format("{z1}"), mv.format("{z3}")]
    add("t12", "Move the {obj} to the {z2} zone, revisit the {z1} zone, then stop at the {z3} zone.", six)
    six_b = [mv.format("{z3}"), mv.format("{z1}"), pk, mv.format("{z2}"), pl, mv.format("{z3}")]
    add("t13", "Via the {z3} zone, move the {obj} from the {z1} zone to the {z2} zone, ending at the {z3} zone.", six_b)

    seven = [mv.format("{z1}"), pk, mv.format("{z3}"), pl, pk, mv.format("{z2}"), pl]
    add("t14", "Move the {obj} to the {z2} zone, setting it down at the {z3} zone on the way.", seven)
    add("t15", "Relocate the {obj} to the {z2} zone with a stop-over in the {z3} zone.", seven)

    eight = seven + [mv.format("{z1}")]
    add("t16", "Move the {obj} to the {z2} zone via the {z3} zone, then go back to the {z1} zone.", eight)
    eight_b = [mv.format("{z2}"), mv.format("{z1}"), pk, mv.format("{z2}"), pl, mv.format("{z3}"),
               mv.format("{z1}"), mv.format("{z2}")]
    add("t17", "Check the {z2} zone, fetch the {obj} from the {z1} zone to it, patrol the {z3} and {z1} zones, and finish at the {z2} zone.", eight_b)

    add("t18", "Swap sides: take the {obj} to the {z2} zone and end up at the {z1} zone.",
        base + [mv.format("{z1}")])
    add("t19", "Move the {obj} into the {z2} zone; afterwards inspect the {z3} zone and the {z1} zone.",
        base + [mv.format("{z3}"), mv.format("{z1}")])
    add("t20", "From the {z1} zone, ferry the {obj} to the {z2} zone.", base)
    return t


def generate_instructions(
    scene,
    templates: list[InstructionTemplate],
    n: int,
    seed: int,
) -> list[InstructionRecord]:
    """Generate n executable instruction records for a scene.

    Selection order: template, then object, then zones; each record's
    plan is guaranteed to reference only entities present in the scene.
    Deterministic in the seed.
    """
    from .world import OBJECT_CATALOG

    rng = np.random.default_rng(seed)
    zone_names = sorted(scene.zones)
    records = []
    i = 0
    attempts = 0
    while len(records) < n:
        attempts += 1
        if attempts > 50 * max(n, 1):
            warnings.warn("instruction generation stalled; returning partial corpus",
                          stacklevel=2)
            break
        tmpl = templates[int(rng.integers(len(templates)))]
        obj = OBJECT_CATALOG[int(rng.integers(len(OBJECT_CATALOG)))]
        need = sorted({s for step in tmpl.plan_steps for s in re.findall(r"\{(z\d)\}", step)}
                      | set(re.findall(r"\{(z\d)\}", tmpl.instruction)))
        if len(zone_names) < len(need):
            warnings.warn(f"template {tmpl.id} needs {len(need)} zones; scene has "
                          f"{len(zone_names)}; skipped", stacklevel=2)
            templates = [t for t in templates if t.id != tmpl.id]
            if not templates:
                break
            continue
        picks = rng.choice(len(zone_names), size=len(need), replace=False)
        subst = {"obj": obj}
        for slot, zi in zip(need, picks):
            subst[slot] = zone_names[int(zi)]
        instruction = tmpl.instruction.format(**subst)
        steps = tuple(PlanStep(s.format(**subst)) for s in tmpl.plan_steps)
        records.append(
            InstructionRecord(
                id=f"inst_{i:04d}",
                instruction=instruction,
                gt_plan=Plan(steps),
                scene_id=scene.name,
                scene_description=scene.description,
            )
        )
        i += 1
    return records


# ---------------------------------------------------------------------------
# JSON Lines exchange format


def write_records_jsonl(path, records: list[InstructionRecord]) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def read_plans_jsonl(path) -> dict[str, Plan]:
    """Read {id, plan} records; 'plan' may be a step list or one string."""
    out = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            plan = rec["plan"]
            if isinstance(plan, str):
                out[rec["id"]] = parse_plan(plan)
            else:
                out[rec["id"]] = parse_plan(", ".join(plan))
    return out
