from alignloop.aligner import AlignmentSet
from alignloop.corpus import Document
from alignloop.rerank_select import PoolEntry
from alignloop.taxonomy import AlignmentLabel, AlignmentReport

RATIO = {"full": 1.0, "partial": 0.5, "none": 0.0}


def entry(doc_id, label="full", score=0.0, text=None):
    lab = AlignmentLabel(label)
    rep = AlignmentReport(doc_id, AlignmentSet(frozenset()), RATIO[label], lab, score)
    return PoolEntry(rep, Document(doc_id, "", text or f"text of {doc_id}"))


WORDS = "ant bee cat dog eel fox gnu hen ibis jay koi lark mole newt owl".split()
ROLE_POOL = ("subject", "predicate", "object", "attributive", "adverbial")


def random_setup(rng, force_no=False):
    """A random small corpus, mock fixture and pipeline config."""
    from alignloop import mock_backend
    from alignloop.corpus import Corpus, Document
    from alignloop.mockmodel import MockFixture
    from alignloop.pipeline import PipelineConfig
    from alignloop.retriever import Retriever, build_index

    docs = [Document(f"d{i:02d}", "", " ".join(rng.choices(WORDS, k=rng.randint(1, 12))))
            for i in range(rng.randint(1, 20))]
    roles = rng.sample(ROLE_POOL, rng.randint(1, 4))
    comps = {r: " ".join(rng.sample(WORDS, rng.randint(1, 2))) for r in roles}
    query = " ".join(comps.values()) + "?"
    synonyms = {w: [rng.choice(WORDS)] for w in rng.sample(WORDS, 4)}
    answers = {} if force_no else {query: [rng.choice(WORDS)]}
    fixture = MockFixture({query: comps}, synonyms, rng.randint(2, 8), answers)
    k = rng.randint(1, 5)
    cfg = PipelineConfig(k=k, T=rng.randint(1, 5), N=rng.randint(k, 12), tau=rng.choice([0.5, 0.8, 1.0]),
                         w=rng.randint(1, 6), pool_union=rng.random() < 0.7)
    return query, Retriever(build_index(Corpus.from_documents(docs))), mock_backend(fixture), cfg
