"""
SQLite archive initialization and connection management.
"""
from pathlib import Path
from typing import Union

import aiosqlite

PathLike = Union[str, Path]


def get_db(path: PathLike):
    """Get an archive connection as an async context manager."""
    # row_factory has to be set once the connection exists
    class DBConnection:
        async def __aenter__(self):
            self.conn = await aiosqlite.connect(path)
            self.conn.row_factory = aiosqlite.Row
            return self.conn

        async def __aexit__(self, exc_type, exc_val, exc_tb):
            await self.conn.close()

    return DBConnection()


async def init_database(path: PathLike):
    """Create the sessions table and its indexes if missing."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)

    async with aiosqlite.connect(path) as db:
        await db.execute("""
            CREATE TABLE IF NOT EXISTS sessions (
                id TEXT PRIMARY KEY,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                seed TEXT NOT NULL,
                verdict_refined TEXT NOT NULL,
                verdict_naive TEXT NOT NULL,
                abort_reason TEXT,
                e1_hat REAL,
                e2_hat REAL,
                e_bar_hat REAL,
                sift_fraction REAL NOT NULL,
                raw_key_len INTEGER NOT NULL,
                final_key_len INTEGER NOT NULL,
                digest TEXT NOT NULL,
                summary_json TEXT NOT NULL
            )
        """)

        await db.execute("""
            CREATE INDEX IF NOT EXISTS idx_sessions_verdict_refined
            ON sessions(verdict_refined)
        """)

        await db.execute("""
            CREATE INDEX IF NOT EXISTS idx_sessions_created_at
            ON sessions(created_at)
        """)

        await db.execute("""
            CREATE INDEX IF NOT EXISTS idx_sessions_digest
            ON sessions(digest)
        """)

        await db.commit()
