"""
Session archive CRUD: store, fetch, list and prune session summaries.
"""
import uuid
from datetime import datetime, timedelta, timezone
from typing import Iterable, List, Optional

from app.database import PathLike, get_db, init_database
from app.models import ArchivedSession, SessionSummary, Verdict


def _row_values(session_id: str, summary: SessionSummary) -> tuple:
    return (
        session_id,
        str(summary.seed),
        summary.verdict_refined.value,
        summary.verdict_naive.value,
        summary.abort_reason.value if summary.abort_reason else None,
        summary.e1_hat,
        summary.e2_hat,
        summary.e_bar_hat,
        summary.sift_fraction,
        summary.raw_key_len,
        summary.final_key_len,
        summary.digest,
        summary.model_dump_json(),
    )


_INSERT = """
    INSERT INTO sessions (
        id, seed, verdict_refined, verdict_naive, abort_reason,
        e1_hat, e2_hat, e_bar_hat, sift_fraction,
        raw_key_len, final_key_len, digest, summary_json
    ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
"""


def _from_row(row) -> ArchivedSession:
    created_at = row["created_at"]
    if isinstance(created_at, str):
        created_at = datetime.fromisoformat(created_at)
    return ArchivedSession(
        id=row["id"],
        created_at=created_at,
        summary=SessionSummary.model_validate_json(row["summary_json"]),
    )


async def save_session(path: PathLike, summary: SessionSummary) -> str:
    """Archive one session summary and return its ID."""
    ids = await save_sessions(path, [summary])
    return ids[0]


async def save_sessions(path: PathLike, summaries: Iterable[SessionSummary]) -> List[str]:
    """Archive many summaries in one transaction."""
    await init_database(path)
    rows = [_row_values(str(uuid.uuid4()), summary) for summary in summaries]

    async with get_db(path) as db:
        await db.executemany(_INSERT, rows)
        await db.commit()

    return [row[0] for row in rows]


async def get_session(path: PathLike, session_id: str) -> Optional[ArchivedSession]:
    """Get an archived session by ID."""
    async with get_db(path) as db:
        cursor = await db.execute(
            "SELECT * FROM sessions WHERE id = ?",
            (session_id,)
        )
        row = await cursor.fetchone()

        if not row:
            return None

        return _from_row(row)


async def list_sessions(path: PathLike, verdict: Optional[Verdict] = None) -> List[ArchivedSession]:
    """List archived sessions, oldest first, optionally by refined verdict."""
    async with get_db(path) as db:
        if verdict is None:
            cursor = await db.execute("SELECT * FROM sessions ORDER BY created_at ASC, rowid ASC")
        else:
            cursor = await db.execute(
                "SELECT * FROM sessions WHERE verdict_refined = ? ORDER BY created_at ASC, rowid ASC",
                (verdict.value,)
            )
        rows = await cursor.fetchall()

        return [_from_row(row) for row in rows]


async def delete_sessions(path: PathLike, older_than_days: int = 7) -> int:
    """Delete sessions archived more than ``older_than_days`` ago."""
    async with get_db(path) as db:
        # CURRENT_TIMESTAMP is UTC
        cutoff_date = datetime.now(timezone.utc) - timedelta(days=older_than_days)
        cursor = await db.execute(
            "DELETE FROM sessions WHERE created_at < ?",
            (cutoff_date.strftime("%Y-%m-%d %H:%M:%S"),)
        )
        await db.commit()
        return cursor.rowcount
