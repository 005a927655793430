import pytest

from aegis import orchestrator, provenance, watermark
from aegis.orchestrator import (
    AWAIT_PLAN_APPROVAL,
    AWAIT_REVIEW_DECISION,
    DONE,
    FAILED,
    GENERATING,
    IllegalIntervention,
    IllegalState,
    Intervention,
    PromptRejected,
    SessionConfig,
    run,
    start_session,
    step,
)
from aegis.planner import PlanEdit
from aegis.reviewer import ReviewScore

PROMPT = "Red dragon flying above a medieval castle during a dramatic sunset"

BASE = dict(canvas_w=64, canvas_h=64, fixed_clock=1_700_000_000, seed=5)

LO, HI = 0.5, 0.9  # below / above the default tau of 0.7


def scripted_scorer(scripts: dict[str, list[float]]):
    """Scorer returning scripts[subtask][attempt-1]."""

    def scorer(component, subtask):
        value = scripts[subtask.id][component.attempt - 1]
        return ReviewScore(value, {"scripted": value}, subtask.id, component.attempt)

    return scorer


# ---------------------------------------------------------------------------
# Reference simulation of the generate/review/regenerate loop (independent
# of the orchestrator; direct transcription of the bounded pipeline loop).


def simulate_pipeline(scripts, tau, max_attempts, on_exhaust):
    actions = []
    for sid, script in scripts.items():
        attempt = 1
        best_attempt, best_score = 0, -1.0
        while True:
            actions.append(("generate", sid, attempt))
            s = script[attempt - 1]
            actions.append(("review", sid, attempt))
            if s > best_score:
                best_attempt, best_score = attempt, s
            if s >= tau:
                actions.append(("accept", sid, attempt))
                break
            if attempt == max_attempts:
                if on_exhaust == "take_best":
                    actions.append(("accept", sid, best_attempt))
                    break
                actions.append(("escalate", sid, attempt))
                return actions  # pipeline pauses for a human
            attempt += 1
    actions.append(("integrate",))
    actions.append(("protect",))
    return actions


def ledger_trace(session):
    trace = []
    for rec in session.ledger.records:
        if rec.action == "component.generated":
            trace.append(("generate", rec.params["subtask"], rec.params["attempt"]))
        elif rec.action == "review.scored":
            trace.append(("review", rec.params["subtask"], rec.params["attempt"]))
            if rec.params["decision"] == "escalate":
                trace.append(("escalate", rec.params["subtask"], rec.params["attempt"]))
        elif rec.action == "component.accepted":
            trace.append(("accept", rec.params["subtask"], rec.params["attempt"]))
        elif rec.action == "composite.created":
            trace.append(("integrate",))
        elif rec.action == "watermark.embedded":
            trace.append(("protect",))
    return trace


# ---------------------------------------------------------------------------
# start_session


def test_auto_mode_starts_generating():
    session = start_session(PROMPT, SessionConfig(mode="auto", **BASE))
    assert session.state == GENERATING
    assert session.current == "st-0-dragon"
    assert len(session.plan.subtasks) == 4


def test_interactive_mode_awaits_plan():
    session = start_session(PROMPT, SessionConfig(mode="interactive", **BASE))
    assert session.state == AWAIT_PLAN_APPROVAL


def test_unintelligible_prompt_rejected():
    with pytest.raises(PromptRejected):
        start_session("qwerty asdf", SessionConfig(**BASE))


def test_ledger_starts_with_plan_created():
    session = start_session(PROMPT, SessionConfig(**BASE))
    assert session.ledger.records[0].action == "plan.created"
    assert session.ledger.records[0].agent == "planner"


# ---------------------------------------------------------------------------
# step / run


def test_perfect_path_step_count():
    # eta=0 scores 1.0 everywhere: 2 steps per renderable subtask + 2.
    session = start_session(PROMPT, SessionConfig(eta=0.0, **BASE))
    steps = 0
    while session.state != DONE:
        step(session)
        steps += 1
    k = len(session.plan.renderable())
    assert steps == 2 * k + 2
    assert session.artifact is not None
    assert provenance.verify(session.ledger) is None


def test_single_regeneration_trace():
    scripts = {
        "st-0-dragon": [LO, HI, HI],
        "st-1-castle": [HI, HI, HI],
        "st-2-background": [HI, HI, HI],
    }
    session = start_session(PROMPT, SessionConfig(**BASE), scorer_fn=scripted_scorer(scripts))
    run(session)
    assert session.state == DONE
    assert session.components["st-0-dragon"].attempt == 2
    expected = simulate_pipeline(scripts, 0.7, 3, "take_best")
    assert ledger_trace(session) == expected


def test_exhaustion_escalates_in_interactive_mode():
    scripts = {
        "st-0-dragon": [LO, LO, LO],
        "st-1-castle": [HI, HI, HI],
        "st-2-background": [HI, HI, HI],
    }
    session = start_session(
        PROMPT, SessionConfig(mode="interactive", **BASE), scorer_fn=scripted_scorer(scripts)
    )
    orchestrator.intervene(session, Intervention("approve_plan"))
    run(session)
    assert session.state == AWAIT_REVIEW_DECISION
    assert session.current == "st-0-dragon"
    assert ledger_trace(session)[-1] == ("escalate", "st-0-dragon", 3)


def test_stepping_awaiting_or_done_is_illegal():
    session = start_session(PROMPT, SessionConfig(mode="interactive", **BASE))
    with pytest.raises(IllegalState):
        step(session)
    done = run(start_session(PROMPT, SessionConfig(**BASE)))
    with pytest.raises(IllegalState):
        step(done)


def test_run_stops_at_gate_without_busy_loop():
    session = start_session(PROMPT, SessionConfig(mode="interactive", **BASE))
    out = run(session)
    assert out.state == AWAIT_PLAN_APPROVAL


def test_run_determinism_bit_identical():
    cfg = SessionConfig(eta=0.25, **BASE)
    a = run(start_session(PROMPT, cfg))
    b = run(start_session(PROMPT, cfg))
    assert a.artifact.same_pixels(b.artifact)
    assert provenance.export(a.ledger) == provenance.export(b.ledger)
    assert a.id == b.id


# ---------------------------------------------------------------------------
# Interventions


def test_plan_edit_and_approve_flow():
    session = start_session(PROMPT, SessionConfig(mode="interactive", eta=0.0, **BASE))
    orchestrator.intervene(
        session,
        Intervention("edit_plan", edit=PlanEdit("set_attribute", "st-0-dragon", {"color": "#00FF00"})),
    )
    assert session.state == AWAIT_PLAN_APPROVAL
    assert session.plan.revision == 1
    assert session.plan.subtask("st-0-dragon").constraints["color"] == [0, 255, 0]
    orchestrator.intervene(session, Intervention("approve_plan"))
    assert session.state == GENERATING
    run(session)
    assert session.state == DONE
    human = [r for r in session.ledger.records if r.agent == "human"]
    assert [r.action for r in human] == ["plan.edited", "plan.approved"]


def test_override_accept_promotes_best_attempt():
    scripts = {
        "st-0-dragon": [0.30, 0.62, 0.45],
        "st-1-castle": [HI, HI, HI],
        "st-2-background": [HI, HI, HI],
    }
    session = start_session(
        PROMPT,
        SessionConfig(mode="interactive", **BASE),
        scorer_fn=scripted_scorer(scripts),
    )
    orchestrator.intervene(session, Intervention("approve_plan"))
    run(session)
    assert session.state == AWAIT_REVIEW_DECISION
    orchestrator.intervene(session, Intervention("override_review", action="accept"))
    assert session.components["st-0-dragon"].attempt == 2  # the 0.62 attempt
    run(session)
    assert session.state == DONE
    overridden = [r for r in session.ledger.records if r.action == "review.overridden"]
    assert len(overridden) == 1 and overridden[0].agent == "human"


def test_override_retry_grants_fresh_attempts():
    scripts = {
        "st-0-dragon": [LO, LO, LO, LO, LO, HI],
        "st-1-castle": [HI] * 6,
        "st-2-background": [HI] * 6,
    }
    session = start_session(
        PROMPT,
        SessionConfig(mode="interactive", **BASE),
        scorer_fn=scripted_scorer(scripts),
    )
    orchestrator.intervene(session, Intervention("approve_plan"))
    run(session)
    assert session.state == AWAIT_REVIEW_DECISION
    orchestrator.intervene(session, Intervention("override_review", action="retry"))
    run(session)
    assert session.state == DONE
    attempts = len(session.attempts["st-0-dragon"])
    max_attempts, retries = 3, 1
    assert attempts <= max_attempts + retries * max_attempts
    assert session.components["st-0-dragon"].attempt == 6


def test_illegal_interventions():
    session = start_session(PROMPT, SessionConfig(**BASE))
    with pytest.raises(IllegalIntervention):
        orchestrator.intervene(session, Intervention("approve_plan"))
    run(session)
    with pytest.raises(IllegalIntervention):
        orchestrator.intervene(session, Intervention("abort"))


def test_set_param_and_abort():
    session = start_session(PROMPT, SessionConfig(mode="interactive", **BASE))
    orchestrator.intervene(session, Intervention("set_param", path="tau", value=0.5))
    assert session.config.tau == 0.5
    with pytest.raises(IllegalIntervention):
        orchestrator.intervene(session, Intervention("set_param", path="tau", value=2.0))
    orchestrator.intervene(session, Intervention("abort"))
    assert session.state == FAILED
    assert session.failure_reason == "aborted"


def test_resume_acts_as_default_continuation():
    session = start_session(PROMPT, SessionConfig(mode="interactive", **BASE))
    orchestrator.intervene(session, Intervention("resume"))
    assert session.state == GENERATING


# ---------------------------------------------------------------------------
# Cross-cutting invariants


def test_every_transition_appends_ledger_records():
    session = start_session(PROMPT, SessionConfig(eta=0.3, **BASE))
    while session.state != DONE:
        before = len(session.ledger.records)
        ev = step(session)
        assert len(session.ledger.records) > before
        assert ev.ledger_to > ev.ledger_from
    assert provenance.verify(session.ledger) is None


def test_event_sequence_strictly_increasing():
    session = run(start_session(PROMPT, SessionConfig(eta=0.2, **BASE)))
    seqs = [ev.seq for ev in session.events]
    assert seqs == sorted(seqs)
    assert len(set(seqs)) == len(seqs)


def test_artifact_payload_matches_ledger():
    cfg = SessionConfig(eta=0.2, canvas_w=256, canvas_h=256, fixed_clock=1_700_000_000, seed=8)
    session = run(start_session(PROMPT, cfg))
    embedded = [r for r in session.ledger.records if r.action == "watermark.embedded"]
    assert embedded[0].params["payload_hex"] == session.payload.hex()
    det = watermark.detect(session.artifact, session.watermark_config(), reference=session.payload)
    assert det.crc_ok
    assert det.payload().hex() == embedded[0].params["payload_hex"]


def test_golden_case_study_run_pinned():
    # Full auto run of the case-study prompt at eta=0.2, fixed seed/clock.
    # The payload hex depends only on SHA-256 over identity metadata and the
    # derived session id, so it is pinned exactly (verified on first run).
    cfg = SessionConfig(
        eta=0.2, seed=101, canvas_w=512, canvas_h=512, fixed_clock=1_700_000_000
    )
    session = run(start_session(PROMPT, cfg))
    assert session.state == DONE
    assert session.id == "s-cc132de4cabc"
    assert session.payload.hex() == "cd4f91020b0c49cf"
    assert len(session.events) == 9  # 2 steps x 3 subtasks + integrate + protect + plan
    det = watermark.detect(session.artifact, session.watermark_config(), reference=session.payload)
    assert det.crc_ok and det.recovery_rate == 1.0
    assert provenance.verify(session.ledger) is None


def test_trace_equivalence_spot_checks():
    # A few structured patterns; the exhaustive sweep lives in acceptance.
    patterns = [
        ([HI], [HI]),
        ([LO, HI], [HI]),
        ([LO, LO, HI], [LO, HI]),
        ([LO, LO, LO], [HI]),
        ([HI], [LO, LO, LO]),
    ]
    for p_dragon, p_castle in patterns:
        scripts = {
            "st-0-dragon": list(p_dragon) + [HI] * 3,
            "st-1-castle": list(p_castle) + [HI] * 3,
            "st-2-background": [HI] * 4,
        }
        session = start_session(PROMPT, SessionConfig(**BASE), scorer_fn=scripted_scorer(scripts))
        run(session)
        expected = simulate_pipeline(
            {k: v for k, v in scripts.items()}, 0.7, 3, "take_best"
        )
        assert ledger_trace(session) == expected, (p_dragon, p_castle)
