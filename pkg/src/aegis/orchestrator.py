"""Pipeline state machine: plan, generate/review per subtask, integrate,
protect, with human intervention gates and a ledger record for every
transition.

States: planning -> (await_plan_approval) -> generating/reviewing loops per
renderable subtask (with await_review_decision on escalation) -> integrating
-> protecting -> done, or failed.  Each call to step() performs exactly one
transition.  Sessions are single-writer; all agent callables are pluggable
so scripted generators/scorers can drive the machine in tests.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace
from typing import Callable

from . import generator, integrator, planner, provenance, reviewer, watermark
from .generator import Component, GenConfig
from .planner import Plan, PlanEdit, Subtask
from .provenance import Ledger, append
from .raster import Image, psnr
from .reviewer import ReviewPolicy, ReviewScore


class OrchestratorError(Exception):
    pass


class PromptRejected(OrchestratorError):
    pass


class IllegalState(OrchestratorError):
    pass


class IllegalIntervention(OrchestratorError):
    pass


AUTO, INTERACTIVE = "auto", "interactive"

PLANNING = "planning"
AWAIT_PLAN_APPROVAL = "await_plan_approval"
GENERATING = "generating"
REVIEWING = "reviewing"
AWAIT_REVIEW_DECISION = "await_review_decision"
INTEGRATING = "integrating"
PROTECTING = "protecting"
DONE = "done"
FAILED = "failed"

TERMINAL = (DONE, FAILED)
AWAITING = (AWAIT_PLAN_APPROVAL, AWAIT_REVIEW_DECISION)


@dataclass(frozen=True)
class SessionConfig:
    mode: str = AUTO
    tau: float = 0.70
    max_attempts: int = 3
    on_exhaust: str | None = None  # default: take_best in auto, escalate in interactive
    canvas_w: int = 512
    canvas_h: int = 512
    eta: float = 0.0
    seed: int = 1
    lam: float = 4.0
    key: int = watermark.WatermarkConfig.key
    theta: float = 0.3
    account_id: str = "acct-demo"
    project_id: str = "proj-demo"
    fixed_clock: int | None = None  # UTC seconds; None = real clock
    session_id: str | None = None

    def __post_init__(self):
        if self.mode not in (AUTO, INTERACTIVE):
            raise OrchestratorError(f"unknown mode {self.mode!r}")
        if not (0.0 <= self.tau <= 1.0):
            raise OrchestratorError(f"tau {self.tau} outside [0, 1]")
        if self.max_attempts < 1:
            raise OrchestratorError("max_attempts must be >= 1")
        if not (0.0 <= self.theta <= 1.0):
            raise OrchestratorError(f"theta {self.theta} outside [0, 1]")

    def exhaust_policy(self) -> str:
        if self.on_exhaust is not None:
            return self.on_exhaust
        return "escalate" if self.mode == INTERACTIVE else "take_best"


@dataclass(frozen=True)
class Intervention:
    kind: str  # approve_plan | edit_plan | override_review | set_param | resume | abort
    edit: PlanEdit | None = None
    subtask: str | None = None
    action: str | None = None  # override_review: accept | retry
    path: str | None = None  # set_param target
    value: object = None


@dataclass(frozen=True)
class Event:
    session_id: str
    seq: int
    state_before: str
    state_after: str
    summary: str
    ledger_from: int
    ledger_to: int

    def as_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "seq": self.seq,
            "state_before": self.state_before,
            "state_after": self.state_after,
            "summary": self.summary,
            "ledger_from": self.ledger_from,
            "ledger_to": self.ledger_to,
        }


@dataclass
class Attempt:
    number: int
    score: ReviewScore | None
    component: Component
    eta_used: float


GeneratorFn = Callable[[Subtask, GenConfig, int], Component]
ScorerFn = Callable[[Component, Subtask], ReviewScore]


@dataclass
class Session:
    id: str
    config: SessionConfig
    plan: Plan
    state: str = PLANNING
    current: str | None = None  # subtask id in generating/reviewing states
    attempts: dict[str, list[Attempt]] = field(default_factory=dict)
    retry_grants: dict[str, int] = field(default_factory=dict)
    components: dict[str, Component] = field(default_factory=dict)
    ledger: Ledger = None  # set in start_session
    events: list[Event] = field(default_factory=list)
    composite_image: Image | None = None
    artifact: Image | None = None
    payload: watermark.WatermarkPayload | None = None
    artifact_psnr: float | None = None
    failure_reason: str | None = None
    generate_fn: GeneratorFn | None = None
    scorer_fn: ScorerFn | None = None
    listeners: list = field(default_factory=list)

    def state_label(self) -> str:
        if self.state in (GENERATING, REVIEWING, AWAIT_REVIEW_DECISION) and self.current:
            return f"{self.state}:{self.current}"
        if self.state == FAILED and self.failure_reason:
            return f"{self.state}:{self.failure_reason}"
        return self.state

    def clock_ms(self) -> int:
        if self.config.fixed_clock is not None:
            return int(self.config.fixed_clock) * 1000
        return int(time.time() * 1000)

    def gen_config(self) -> GenConfig:
        c = self.config
        return GenConfig(c.canvas_w, c.canvas_h, c.eta, c.seed)

    def watermark_config(self) -> watermark.WatermarkConfig:
        return watermark.WatermarkConfig(lam=self.config.lam, key=self.config.key)

    def policy_for(self, subtask_id: str) -> ReviewPolicy:
        grants = self.retry_grants.get(subtask_id, 0)
        return ReviewPolicy(
            tau=self.config.tau,
            max_attempts=self.config.max_attempts * (1 + grants),
            on_exhaust=self.config.exhaust_policy(),
        )

    def renderable_ids(self) -> list[str]:
        return [st.id for st in self.plan.renderable()]

    def next_subtask(self, after: str | None = None) -> str | None:
        ids = self.renderable_ids()
        if after is None:
            return ids[0] if ids else None
        remaining = ids[ids.index(after) + 1 :]
        return remaining[0] if remaining else None

    def best_attempt(self, subtask_id: str) -> Attempt:
        return max(
            self.attempts[subtask_id],
            key=lambda a: (a.score.value if a.score else -1.0, -a.number),
        )


def derive_session_id(cfg: SessionConfig, prompt_text: str) -> str:
    basis = {
        "account_id": cfg.account_id,
        "project_id": cfg.project_id,
        "prompt": prompt_text,
        "seed": cfg.seed,
        "clock": cfg.fixed_clock if cfg.fixed_clock is not None else int(time.time() * 1000),
    }
    digest = hashlib.sha256(provenance.canonical_serialize(basis)).hexdigest()
    return f"s-{digest[:12]}"


def start_session(
    prompt_text: str,
    cfg: SessionConfig,
    generate_fn: GeneratorFn | None = None,
    scorer_fn: ScorerFn | None = None,
    planner_fn: Callable[[str], Plan] | None = None,
) -> Session:
    """Parse + decompose immediately; auto mode skips plan approval."""
    try:
        if planner_fn is not None:
            plan = planner_fn(prompt_text)
        else:
            plan = planner.decompose(planner.parse_any(prompt_text))
    except planner.PlannerError as exc:
        raise PromptRejected(str(exc)) from exc

    sid = cfg.session_id or derive_session_id(cfg, prompt_text)
    session = Session(
        id=sid,
        config=cfg,
        plan=plan,
        ledger=Ledger(sid),
        generate_fn=generate_fn,
        scorer_fn=scorer_fn,
    )
    before = PLANNING
    session.ledger = append(
        session.ledger,
        timestamp=session.clock_ms(),
        agent="planner",
        action="plan.created",
        input_obj={"prompt": prompt_text},
        output_obj=_plan_obj(plan),
        params={"origin": plan.prompt.origin, "subtasks": len(plan.subtasks)},
    )
    if cfg.mode == INTERACTIVE:
        session.state = AWAIT_PLAN_APPROVAL
    else:
        session.state = GENERATING
        session.current = session.next_subtask()
    _emit(session, before, "plan created")
    return session


def _plan_obj(plan: Plan) -> dict:
    return {
        "revision": plan.revision,
        "subtasks": [
            {"id": st.id, "kind": st.kind, "constraints": _intify(st.constraints)}
            for st in plan.subtasks
        ],
    }


def _intify(value):
    """Floats are banned in ledger objects; encode them as micro-units."""
    if isinstance(value, float):
        return {"micro": int(round(value * 1_000_000))}
    if isinstance(value, dict):
        return {k: _intify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_intify(v) for v in value]
    return value


def _emit(session: Session, state_before: str, summary: str, ledger_from: int | None = None):
    ev = Event(
        session_id=session.id,
        seq=len(session.events) + 1,
        state_before=state_before,
        state_after=session.state_label(),
        summary=summary,
        ledger_from=ledger_from if ledger_from is not None else len(session.ledger.records) - 1,
        ledger_to=len(session.ledger.records),
    )
    session.events.append(ev)
    for listener in list(session.listeners):
        listener(session, ev)
    return ev


def step(session: Session) -> Event:
    """Perform exactly one pipeline transition."""
    if session.state in TERMINAL or session.state in AWAITING:
        raise IllegalState(f"cannot step in state {session.state_label()}")
    before = session.state_label()
    ledger_from = len(session.ledger.records)

    if session.state == GENERATING:
        st = session.plan.subtask(session.current)
        attempt_no = len(session.attempts.get(st.id, [])) + 1
        gen = session.generate_fn or generator.generate
        comp = gen(st, session.gen_config(), attempt_no)
        session.attempts.setdefault(st.id, []).append(
            Attempt(attempt_no, None, comp, session.config.eta)
        )
        session.ledger = append(
            session.ledger,
            timestamp=session.clock_ms(),
            agent="generator",
            action="component.generated",
            input_obj={"subtask": st.id, "attempt": attempt_no},
            output_obj={"params_used": _intify(comp.params_used), "bbox": _intify(list(comp.measured_bbox))},
            params={"subtask": st.id, "attempt": attempt_no},
        )
        session.state = REVIEWING
        return _emit(session, before, f"generated attempt {attempt_no} for {st.id}", ledger_from)

    if session.state == REVIEWING:
        st = session.plan.subtask(session.current)
        attempt = session.attempts[st.id][-1]
        scorer = session.scorer_fn or reviewer.score_component
        sc = scorer(attempt.component, st)
        attempt.score = sc
        policy = session.policy_for(st.id)
        decision = reviewer.gate(sc, policy)
        session.ledger = append(
            session.ledger,
            timestamp=session.clock_ms(),
            agent="reviewer",
            action="review.scored",
            input_obj={"subtask": st.id, "attempt": attempt.number},
            output_obj={"parts": _intify(sc.parts)},
            params={
                "subtask": st.id,
                "attempt": attempt.number,
                "score_milli": int(round(sc.value * 1000)),
                "tau_milli": int(round(policy.tau * 1000)),
                "decision": decision.kind,
            },
        )
        if decision.kind == "accept":
            chosen = session.best_attempt(st.id) if decision.use_best else attempt
            session.components[st.id] = chosen.component
            session.ledger = append(
                session.ledger,
                timestamp=session.clock_ms(),
                agent="reviewer",
                action="component.accepted",
                input_obj={"subtask": st.id},
                params={
                    "subtask": st.id,
                    "attempt": chosen.number,
                    "score_milli": int(round(chosen.score.value * 1000)),
                    "via": "take_best" if decision.use_best else "gate",
                },
            )
            nxt = session.next_subtask(st.id)
            if nxt is None:
                session.state = INTEGRATING
                session.current = None
            else:
                session.state = GENERATING
                session.current = nxt
            return _emit(session, before, f"accepted {st.id} attempt {chosen.number}", ledger_from)
        if decision.kind == "regenerate":
            session.state = GENERATING
            return _emit(session, before, f"regenerating {st.id}", ledger_from)
        session.state = AWAIT_REVIEW_DECISION
        return _emit(session, before, f"escalated {st.id} after attempt {attempt.number}", ledger_from)

    if session.state == INTEGRATING:
        order = session.renderable_ids()
        comps = [session.components[sid] for sid in order]
        canvas = (session.config.canvas_w, session.config.canvas_h)
        placements = integrator.resolve_layout(comps, canvas, session.config.theta)
        bg = next((c for c in comps if c.measured_bbox == (0.0, 0.0, 1.0, 1.0)), (255, 255, 255))
        session.composite_image = integrator.composite(bg, placements, comps, canvas).image
        session.ledger = append(
            session.ledger,
            timestamp=session.clock_ms(),
            agent="integrator",
            action="composite.created",
            output_obj={
                "placements": [
                    {
                        "subtask": p.subtask_id,
                        "z": p.z,
                        "center": _intify(list(p.final_center)),
                        "displaced_by": _intify(list(p.displaced_by)),
                        "resolved": p.resolved,
                    }
                    for p in placements
                ]
            },
            params={"theta_milli": int(round(session.config.theta * 1000))},
        )
        session.state = PROTECTING
        return _emit(session, before, "composite created", ledger_from)

    if session.state == PROTECTING:
        created_at = (
            session.config.fixed_clock
            if session.config.fixed_clock is not None
            else int(time.time())
        )
        payload = watermark.build_payload(
            session.config.account_id, session.config.project_id, session.id, created_at
        )
        artifact = watermark.embed(session.composite_image, payload, session.watermark_config())
        session.payload = payload
        session.artifact = artifact
        session.artifact_psnr = psnr(artifact, session.composite_image)
        session.ledger = append(
            session.ledger,
            timestamp=session.clock_ms(),
            agent="protector",
            action="watermark.embedded",
            output_obj={"payload_hex": payload.hex()},
            params={
                "payload_hex": payload.hex(),
                "lambda_milli": int(round(session.config.lam * 1000)),
                "psnr_mdb": _psnr_scalar(session.artifact_psnr),
                "created_at": created_at,
            },
        )
        session.state = DONE
        return _emit(session, before, f"watermark embedded ({payload.hex()})", ledger_from)

    raise IllegalState(session.state_label())


def _psnr_scalar(value: float):
    return "inf" if value == float("inf") else int(round(value * 1000))


def intervene(session: Session, iv: Intervention) -> Event:
    """Apply a human intervention; legality depends on the session state."""
    before = session.state_label()
    ledger_from = len(session.ledger.records)

    def human_record(action: str, params: dict, output_obj=None):
        session.ledger = append(
            session.ledger,
            timestamp=session.clock_ms(),
            agent="human",
            action=action,
            output_obj=output_obj,
            params=params,
        )

    if iv.kind == "abort":
        if session.state in TERMINAL:
            raise IllegalIntervention(f"abort in state {before}")
        human_record("session.aborted", {})
        session.state = FAILED
        session.failure_reason = "aborted"
        return _emit(session, before, "session aborted", ledger_from)

    if iv.kind == "set_param":
        if session.state in TERMINAL:
            raise IllegalIntervention(f"set_param in state {before}")
        session.config = _apply_param(session.config, iv.path, iv.value)
        human_record("param.set", {"path": iv.path, "value": str(iv.value)})
        return _emit(session, before, f"param {iv.path} set", ledger_from)

    if iv.kind == "edit_plan":
        if session.state != AWAIT_PLAN_APPROVAL:
            raise IllegalIntervention(f"edit_plan in state {before}")
        if iv.edit is None:
            raise IllegalIntervention("edit_plan needs an edit")
        try:
            session.plan = planner.edit_plan(session.plan, iv.edit)
        except planner.PlannerError as exc:
            raise IllegalIntervention(str(exc)) from exc
        human_record(
            "plan.edited",
            {"op": iv.edit.op, "target": iv.edit.target or "", "revision": session.plan.revision},
            output_obj=_plan_obj(session.plan),
        )
        return _emit(session, before, f"plan edited ({iv.edit.op})", ledger_from)

    if iv.kind in ("approve_plan", "resume") and session.state == AWAIT_PLAN_APPROVAL:
        human_record("plan.approved", {"revision": session.plan.revision, "via": iv.kind})
        session.state = GENERATING
        session.current = session.next_subtask()
        return _emit(session, before, "plan approved", ledger_from)

    if iv.kind in ("override_review", "resume") and session.state == AWAIT_REVIEW_DECISION:
        st_id = iv.subtask or session.current
        if st_id != session.current:
            raise IllegalIntervention(f"review override targets {st_id}, awaiting {session.current}")
        action = iv.action or "accept"
        if action == "accept":
            chosen = session.best_attempt(st_id)
            session.components[st_id] = chosen.component
            human_record(
                "review.overridden",
                {
                    "subtask": st_id,
                    "action": "accept",
                    "attempt": chosen.number,
                    "score_milli": int(round((chosen.score.value if chosen.score else 0.0) * 1000)),
                },
            )
            nxt = session.next_subtask(st_id)
            if nxt is None:
                session.state = INTEGRATING
                session.current = None
            else:
                session.state = GENERATING
                session.current = nxt
            return _emit(session, before, f"override accepted {st_id} attempt {chosen.number}", ledger_from)
        if action == "retry":
            session.retry_grants[st_id] = session.retry_grants.get(st_id, 0) + 1
            human_record("review.overridden", {"subtask": st_id, "action": "retry"})
            session.state = GENERATING
            return _emit(session, before, f"override retry {st_id}", ledger_from)
        raise IllegalIntervention(f"unknown override action {action!r}")

    raise IllegalIntervention(f"{iv.kind} in state {before}")


def _apply_param(cfg: SessionConfig, path: str | None, value) -> SessionConfig:
    fields = {
        "tau": ("tau", float),
        "max_attempts": ("max_attempts", int),
        "eta": ("eta", float),
        "theta": ("theta", float),
        "lambda": ("lam", float),
        "on_exhaust": ("on_exhaust", str),
        "seed": ("seed", int),
    }
    if path not in fields:
        raise IllegalIntervention(f"unknown parameter path {path!r}")
    name, cast = fields[path]
    try:
        new_cfg = replace(cfg, **{name: cast(value)})
    except (TypeError, ValueError, OrchestratorError, reviewer.ReviewerError) as exc:
        raise IllegalIntervention(f"bad value for {path}: {exc}") from exc
    if name == "eta" and not (0.0 <= new_cfg.eta <= 1.0):
        raise IllegalIntervention(f"eta {value} outside [0, 1]")
    if name == "lam" and new_cfg.lam <= 0:
        raise IllegalIntervention("lambda must be positive")
    return new_cfg


def run(session: Session) -> Session:
    """Step until done/failed; stops (without busy-looping) at await gates."""
    while session.state not in TERMINAL and session.state not in AWAITING:
        step(session)
    return session
