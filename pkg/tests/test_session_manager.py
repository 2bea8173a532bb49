"""Tests for the SQLite session archive."""
import asyncio

import pytest

from app.database import get_db, init_database
from app.models import AbortReason, ProtocolConfig, SessionSummary, Verdict
from app.session_manager import delete_sessions, get_session, list_sessions, save_session, save_sessions


def _summary(seed: int, verdict: Verdict = Verdict.ACCEPT) -> SessionSummary:
    return SessionSummary(
        seed=seed,
        config=ProtocolConfig(seed=seed),
        verdict_refined=verdict,
        verdict_naive=Verdict.ACCEPT,
        abort_reason=None if verdict is Verdict.ACCEPT else AbortReason.ERROR_RATE,
        e1_hat=0.01,
        e2_hat=0.0,
        e_bar_hat=0.005,
        population_e_bar=0.004,
        sift_fraction=0.5,
        raw_key_len=48_000,
        reconciled_len=47_000,
        final_key_len=30_000 if verdict is Verdict.ACCEPT else 0,
        digest=f"{seed:064x}",
    )


@pytest.fixture
def archive(tmp_path):
    """Path of a fresh archive file."""
    return tmp_path / "archive" / "sessions.db"


def test_init_database_is_idempotent(archive):
    """Creating the schema twice is harmless."""
    asyncio.run(init_database(archive))
    asyncio.run(init_database(archive))
    assert archive.exists()


def test_save_and_get_session(archive):
    """A stored summary comes back unchanged."""
    summary = _summary(2 ** 63 + 5)
    session_id = asyncio.run(save_session(archive, summary))
    stored = asyncio.run(get_session(archive, session_id))
    assert stored.id == session_id
    assert stored.summary == summary
    assert stored.created_at is not None


def test_get_missing_session(archive):
    """Unknown IDs return None."""
    asyncio.run(init_database(archive))
    assert asyncio.run(get_session(archive, "missing")) is None


def test_list_sessions_filters_by_verdict(archive):
    """Listing can be narrowed to one refined verdict."""
    summaries = [_summary(1), _summary(2, Verdict.ABORT), _summary(3)]
    ids = asyncio.run(save_sessions(archive, summaries))
    assert len(ids) == 3
    everything = asyncio.run(list_sessions(archive))
    assert [s.summary.seed for s in everything] == [1, 2, 3]
    aborted = asyncio.run(list_sessions(archive, Verdict.ABORT))
    assert [s.id for s in aborted] == [ids[1]]


def test_delete_old_sessions(archive):
    """Only sessions older than the cutoff are pruned."""
    old_id, new_id = asyncio.run(save_sessions(archive, [_summary(1), _summary(2)]))

    async def age_first():
        async with get_db(archive) as db:
            await db.execute("UPDATE sessions SET created_at = '2000-01-01 00:00:00' WHERE id = ?", (old_id,))
            await db.commit()

    asyncio.run(age_first())
    assert asyncio.run(delete_sessions(archive, older_than_days=7)) == 1
    remaining = asyncio.run(list_sessions(archive))
    assert [s.id for s in remaining] == [new_id]
