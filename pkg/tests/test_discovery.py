import json

import pytest

from phenokg.discovery import (
    FunnelReport,
    LikelihoodScore,
    RubricCriterion,
    ScoringRubric,
    build_score_prompt,
    candidate_cohort,
    load_rubric,
    run_funnel,
    save_rubric,
    score_patient,
)
from phenokg.errors import DomainError, ScoringError
from phenokg.extraction import AuditLog, GleanConfig
from phenokg.fixtures import (
    BPAN_ALLOWED_TERMS,
    BPAN_GENERIC_ICD10,
    bpan_rubric,
    build_discovery_graph,
)
from phenokg.kg import NoteNode, PatientNode, build_graph, patient_record
from phenokg.llm import ScriptedBackend


@pytest.fixture(scope="module")
def haystack():
    return build_discovery_graph(n_patients=200, seed=11, n_positive=5)


def oracle_backend(planted, allowed_terms):
    """Scripted oracle: planted patients score 7-9 and assert allowed terms."""
    planted = sorted(planted)
    terms = sorted(allowed_terms)

    def responder(request):
        tag = request.request_tag
        if tag.startswith("score:"):
            key = tag.split(":", 1)[1]
            if key in planted:
                idx = planted.index(key)
                return json.dumps({"score": 7 + idx % 3, "rationale": "matches rubric"})
            return json.dumps({"score": 2, "rationale": "weak match"})
        _, key, round_part = tag.split(":")
        if round_part != "r0":
            return json.dumps({key: []})
        idx = planted.index(key)
        chosen = terms[: 1 + idx % 3]
        rows = [{"category": t, "confidence": 0.85, "reasoning": "documented"} for t in chosen]
        return json.dumps({key: rows})

    return ScriptedBackend(responder=responder)


def test_rubric_round_trip(tmp_path):
    rubric = bpan_rubric()
    path = tmp_path / "rubric.json"
    save_rubric(rubric, path)
    assert load_rubric(path) == rubric


def test_rubric_validation():
    with pytest.raises(DomainError):
        ScoringRubric("d", "ctx", criteria=())
    with pytest.raises(DomainError):
        RubricCriterion("c", weight=0.0)
    with pytest.raises(DomainError):
        LikelihoodScore("p", 11)


def test_score_patient_oracle(haystack):
    graph, planted = haystack
    record = patient_record(graph, planted[0])
    backend = ScriptedBackend(queue=[json.dumps({"score": 8, "rationale": "clear"})])
    score = score_patient(record, bpan_rubric(), backend)
    assert score == LikelihoodScore(planted[0], 8, "clear")


def test_score_patient_retry_contract(haystack):
    graph, planted = haystack
    record = patient_record(graph, planted[0])
    backend = ScriptedBackend(
        queue=[json.dumps({"score": 12, "rationale": "too high"}), json.dumps({"score": 7, "rationale": "ok"})]
    )
    assert score_patient(record, bpan_rubric(), backend).score == 7


def test_score_patient_prose_twice_is_scoring_error(haystack):
    graph, planted = haystack
    record = patient_record(graph, planted[0])
    backend = ScriptedBackend(queue=["not json at all", "still prose"])
    with pytest.raises(ScoringError, match=planted[0]):
        score_patient(record, bpan_rubric(), backend)


def test_score_prompt_embeds_rubric(haystack):
    graph, planted = haystack
    request = build_score_prompt(patient_record(graph, planted[0]), bpan_rubric())
    assert "scale from 0 to 9" in request.system
    for criterion in bpan_rubric().criteria:
        assert criterion.description in request.system
    assert request.request_tag == f"score:{planted[0]}"


def test_candidate_cohort_inclusion_exclusion():
    # 2 keyword hits union 50 code hits with exactly 1 overlap -> 51
    records = []
    for i in range(60):
        key = f"c{i:02d}"
        codes = {"R62.50"} if i < 50 else {"Z00.0"}
        records.append(PatientNode(key, icd10=frozenset(codes)))
        text = "mentions SIGNALWORD here" if i in (0, 55) else "routine"
        records.append(NoteNode(f"{key}-n", key, text))
    graph = build_graph(records)
    cohort = candidate_cohort(graph, keywords={"SIGNALWORD"}, generic_icd={"R62.50"})
    assert len(cohort) == 51
    keyword_only = candidate_cohort(graph, keywords={"SIGNALWORD"}, generic_icd=set())
    assert keyword_only == {"c00", "c55"}
    assert candidate_cohort(graph, keywords={"missingword"}, generic_icd={"X99.9"}) == set()
    with pytest.raises(DomainError):
        candidate_cohort(graph, keywords=set(), generic_icd=set())


def test_run_funnel_recovers_planted(haystack, dravet_ontology):
    graph, planted = haystack
    backend = oracle_backend(planted, BPAN_ALLOWED_TERMS)
    audit = AuditLog()
    report = run_funnel(
        graph,
        bpan_rubric(),
        keywords={"BPAN"},
        generic_icd=set(BPAN_GENERIC_ICD10),
        threshold=7,
        allowed_terms=BPAN_ALLOWED_TERMS,
        backend=backend,
        ontology=dravet_ontology,
        glean=GleanConfig(1),
        audit=audit,
    )
    assert sorted(f.patient for f in report.finalists) == planted
    counts = [count for _, count in report.stage_counts]
    assert counts == sorted(counts, reverse=True)
    stages = [name for name, _ in report.stage_counts]
    assert stages == ["candidates", "scored", "filtered", "extracted", "finalists"]
    assert report.stage_counts[0][1] == 200  # every patient carries a generic code


def test_funnel_ranking_deterministic_and_duplicate_free(haystack, dravet_ontology):
    graph, planted = haystack
    run = lambda: run_funnel(  # noqa: E731
        graph,
        bpan_rubric(),
        keywords=set(),
        generic_icd=set(BPAN_GENERIC_ICD10),
        threshold=7,
        allowed_terms=BPAN_ALLOWED_TERMS,
        backend=oracle_backend(planted, BPAN_ALLOWED_TERMS),
        ontology=dravet_ontology,
    )
    first, second = run(), run()
    assert first == second
    patients = [f.patient for f in first.finalists]
    assert len(patients) == len(set(patients))
    scores = [f.score for f in first.finalists]
    assert scores == sorted(scores, reverse=True)


def test_raising_threshold_never_adds_finalists(haystack, dravet_ontology):
    graph, planted = haystack

    def run(threshold):
        report = run_funnel(
            graph,
            bpan_rubric(),
            keywords=set(),
            generic_icd=set(BPAN_GENERIC_ICD10),
            threshold=threshold,
            allowed_terms=BPAN_ALLOWED_TERMS,
            backend=oracle_backend(planted, BPAN_ALLOWED_TERMS),
            ontology=dravet_ontology,
        )
        return {f.patient for f in report.finalists}

    assert run(9) <= run(8) <= run(7)


def test_threshold_bounds(haystack, dravet_ontology):
    graph, planted = haystack
    with pytest.raises(DomainError):
        run_funnel(
            graph,
            bpan_rubric(),
            keywords={"BPAN"},
            generic_icd=set(),
            threshold=10,
            allowed_terms=BPAN_ALLOWED_TERMS,
            backend=oracle_backend(planted, BPAN_ALLOWED_TERMS),
            ontology=dravet_ontology,
        )


def test_threshold_zero_keeps_scored_stage(haystack, dravet_ontology):
    graph, planted = haystack
    report = run_funnel(
        graph,
        bpan_rubric(),
        keywords={"BPAN"},  # candidates: only the 2 explicit mentions
        generic_icd=set(),
        threshold=0,
        allowed_terms=BPAN_ALLOWED_TERMS,
        backend=oracle_backend(planted, BPAN_ALLOWED_TERMS),
        ontology=dravet_ontology,
    )
    counts = dict(report.stage_counts)
    assert counts["filtered"] == counts["scored"] == 2


def test_scoring_failures_skip_and_audit(haystack, dravet_ontology):
    graph, planted = haystack
    broken = planted[0]

    inner = oracle_backend(planted, BPAN_ALLOWED_TERMS)

    def responder(request):
        if request.request_tag == f"score:{broken}":
            return "no json for you"
        return inner._responder(request)

    audit = AuditLog()
    report = run_funnel(
        graph,
        bpan_rubric(),
        keywords=set(),
        generic_icd=set(BPAN_GENERIC_ICD10),
        threshold=7,
        allowed_terms=BPAN_ALLOWED_TERMS,
        backend=ScriptedBackend(responder=responder),
        ontology=dravet_ontology,
        audit=audit,
    )
    assert audit.count("scoring_failed") == 1
    assert sorted(f.patient for f in report.finalists) == sorted(set(planted) - {broken})
    counts = dict(report.stage_counts)
    assert counts["scored"] == counts["candidates"] - 1


def test_min_assertions_filter(haystack, dravet_ontology):
    graph, planted = haystack
    # the oracle gives planted[i] 1 + i % 3 assertions; demanding 2 drops the 1-assertion ones
    report = run_funnel(
        graph,
        bpan_rubric(),
        keywords=set(),
        generic_icd=set(BPAN_GENERIC_ICD10),
        threshold=7,
        allowed_terms=BPAN_ALLOWED_TERMS,
        backend=oracle_backend(planted, BPAN_ALLOWED_TERMS),
        ontology=dravet_ontology,
        min_assertions=2,
    )
    expected = {key for i, key in enumerate(sorted(planted)) if 1 + i % 3 >= 2}
    assert {f.patient for f in report.finalists} == expected


def test_funnel_report_serialization(haystack, dravet_ontology):
    graph, planted = haystack
    report = run_funnel(
        graph,
        bpan_rubric(),
        keywords=set(),
        generic_icd=set(BPAN_GENERIC_ICD10),
        threshold=7,
        allowed_terms=BPAN_ALLOWED_TERMS,
        backend=oracle_backend(planted, BPAN_ALLOWED_TERMS),
        ontology=dravet_ontology,
    )
    payload = json.loads(report.to_json())
    assert payload["stage_counts"][0]["stage"] == "candidates"
    markdown = report.to_markdown()
    assert "| stage | count |" in markdown
    for finalist in report.finalists:
        assert finalist.patient in markdown


def test_funnel_report_rejects_increasing_counts():
    with pytest.raises(DomainError):
        FunnelReport((("a", 1), ("b", 2)), ())
