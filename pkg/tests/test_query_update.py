import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alignloop import mock_backend
from alignloop.aligner import AlignmentSet, RewrittenQuery
from alignloop.backend import Backend
from alignloop.corpus import Document
from alignloop.errors import BackendError, InvalidTau
from alignloop.gateway import Gateway, GatewayPolicy, ScriptedTransport
from alignloop.mockmodel import MockFixture
from alignloop.query_update import CONCAT, PSEUDO, QueryState, generate_pseudo_doc, scqu_update
from alignloop.taxonomy import AlignmentReport, label_for


def report(ratio):
    return AlignmentReport("d", AlignmentSet(frozenset()), ratio, label_for(ratio))


def rq(rendered, comps=None):
    return RewrittenQuery("orig", {}, rendered, comps or {"subject": rendered})


class FixedPseudo(ScriptedTransport):
    """Answers every prompt with the same passage."""

    def __init__(self, text):
        super().__init__({}, default=text)


def pseudo_backend(text="p"):
    return Backend(Gateway(FixedPseudo(text)), model="m")


def test_pseudo_doc_mock_concatenation():
    be = mock_backend(MockFixture(synonyms={"established": ["founded"]}))
    q = RewrittenQuery("Who founded Acme?", {"predicate": "established"}, "Who established Acme?",
                       {"subject": "Who", "predicate": "established", "object": "Acme"})
    pd = generate_pseudo_doc(q, be)
    assert pd.text == "Who established founded Acme"
    assert pd.source_query == "Who established Acme?"


def test_pseudo_doc_dedup_keeps_first():
    be = mock_backend(MockFixture(synonyms={"acme": ["Who", "Acme Corp"]}))
    q = rq("x", {"subject": "Who", "object": "Acme"})
    assert generate_pseudo_doc(q, be).text == "Who Acme Acme Corp"


def test_pseudo_doc_needs_query():
    with pytest.raises(ValueError):
        generate_pseudo_doc("", mock_backend())


def test_pseudo_doc_bounded():
    be = pseudo_backend(" ".join(["w"] * 500))
    pd = generate_pseudo_doc("question?", be, max_pseudo_tokens=128)
    assert pd.text and len(pd.text.split()) == 128


def test_concat_branch():
    s = scqu_update(QueryState("q"), report(0.9), Document("d", "", "t"), rq("q2"), 0.8, pseudo_backend())
    assert s.updated_q == "q t" and s.branch == CONCAT and s.iteration == 2


def test_pseudo_branch():
    s = scqu_update(QueryState("q"), report(0.5), Document("d", "", "t"), rq("q2"), 0.8, pseudo_backend("p"))
    assert s.updated_q == "q2 p" and s.branch == PSEUDO and s.rewritten_q == "q2"


def test_threshold_is_inclusive():
    s = scqu_update(QueryState("q"), report(0.8), Document("d", "", "t"), rq("q2"), 0.8, pseudo_backend())
    assert s.branch == CONCAT


def test_history_and_iteration():
    be = pseudo_backend()
    s1 = scqu_update(QueryState("q"), report(0.9), Document("d", "", "t1"), rq("q2"), 0.8, be)
    s2 = scqu_update(s1, report(0.9), Document("d", "", "t2"), rq("q2"), 0.8, be)
    assert s2.iteration == 3 and s2.history == ("q t1",) and s2.updated_q == "q t2"


def test_invalid_tau():
    with pytest.raises(InvalidTau):
        scqu_update(QueryState("q"), report(0.5), Document("d", "", "t"), rq("q2"), 0.0, pseudo_backend())


def test_pseudo_generation_failure():
    be = Backend(Gateway(ScriptedTransport({}), GatewayPolicy(max_retries=0)), model="m")
    with pytest.raises(BackendError):
        scqu_update(QueryState("q"), report(0.1), Document("d", "", "t"), rq("q2"), 0.8, be)


def test_query_truncated_keeping_prefix():
    doc = Document("d", "", " ".join(f"w{i}" for i in range(600)))
    s = scqu_update(QueryState("my query"), report(1.0), doc, rq("x"), 0.8, pseudo_backend())
    toks = s.updated_q.split()
    assert len(toks) == 512 and toks[:3] == ["my", "query", "w0"]


words = st.text(alphabet="abc ", min_size=1, max_size=30).filter(str.strip)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0.01, 1), words, words, words, words)
def test_branch_and_growth(ratio, tau, q, q2, doc_text, pseudo):
    s = scqu_update(QueryState(q), report(ratio), Document("d", "", doc_text), rq(q2), tau,
                    pseudo_backend(pseudo))
    if ratio >= tau:
        assert s.branch == CONCAT and s.updated_q.startswith(q)
        bound = len(q.split()) + len(doc_text.split())
    else:
        assert s.branch == PSEUDO and s.updated_q.startswith(q2)
        bound = len(q2.split()) + 128
    assert len(s.updated_q.split()) <= bound + 1
