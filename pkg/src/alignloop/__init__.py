"""Grounded-alignment retrieval loop for verifiable generation."""
from .aligner import (
    AlignmentSet,
    RewrittenQuery,
    SyntacticComponents,
    align_components,
    decompose,
    reflect,
    synonym_rewrite,
)
from .backend import Backend
from .corpus import Corpus, Document, get, ingest_jsonl, stats, tokenize
from .gateway import ChatRequest, Gateway, GatewayPolicy, Message
from .mockmodel import MockFixture, MockModel
from .pipeline import CitedAnswer, Pipeline, PipelineConfig, RunResult, Statement, run_query
from .retriever import Retriever, bm25_search, build_index, vector_search
from .taxonomy import AlignmentLabel, AlignmentReport, classify, is_high_alignment

__version__ = "0.1.0"


def mock_backend(fixture: MockFixture | None = None, **gateway_kw) -> Backend:
    """Backend answering from the offline mock model."""
    fixture = fixture or MockFixture()
    return Backend(Gateway(MockModel(fixture), **gateway_kw), fixture=fixture)
