"""Session service for the elicitation -> guided-session protocol.

Sessions move forward through created -> elicited -> recommended ->
completed. Persistence is an append-only JSON-lines event log plus an
in-memory materialized view; replaying the log reconstructs identical state.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .affect import therapeutic_curation_filter
from .catalog import Catalog, MUSIC, PAINTING
from .engines import (
    Engine,
    PreferenceRating,
    RecommendationEntry,
    RecommendationList,
    SimilarityIndex,
    recommend,
)
from .errors import (
    AffectCdrError,
    InsufficientDataError,
    IntegrityError,
    NotReadyError,
    SessionConflictError,
    SessionStateError,
    SessionValidationError,
    UnknownItemError,
)

REAL_ITEMS_PER_MODALITY = 10
ATTENTION_ITEMS_PER_MODALITY = 1
ITEMS_PER_MODALITY = REAL_ITEMS_PER_MODALITY + ATTENTION_ITEMS_PER_MODALITY
ATTENTION_REQUIRED_RATING = 1
DEFAULT_TOP_N = 3
PANAS_ITEMS = 10

QUALITY_METRICS = ("accuracy", "diversity", "novelty", "serendipity", "immersion", "engagement")


class SessionState(str, Enum):
    CREATED = "created"
    ELICITED = "elicited"
    RECOMMENDED = "recommended"
    COMPLETED = "completed"


@dataclass(frozen=True)
class ElicitationItem:
    item_id: str
    modality: str
    is_attention_check: bool


@dataclass
class Session:
    session_id: str
    engine: Engine
    elicitation_items: list[ElicitationItem]
    state: SessionState = SessionState.CREATED
    ratings: list[PreferenceRating] = field(default_factory=list)
    attention_passed: bool | None = None
    recommendations: RecommendationList | None = None
    recommendations_n: int | None = None
    mood_pre: dict | None = None
    mood_post: dict | None = None
    reflections: list[dict] = field(default_factory=list)
    quality_feedback: dict | None = None
    created_at: float = 0.0
    updated_at: float = 0.0

    def items_of(self, modality: str) -> list[ElicitationItem]:
        return [item for item in self.elicitation_items if item.modality == modality]

    def to_dict(self) -> dict:
        recs = None
        if self.recommendations is not None:
            recs = {
                "engine": self.recommendations.engine.value,
                "entries": [
                    {"painting_id": e.painting_id, "distance": e.distance}
                    for e in self.recommendations.entries
                ],
                "weights": [[item_id, w] for item_id, w in self.recommendations.weights],
                "truncated": self.recommendations.truncated,
            }
        return {
            "session_id": self.session_id,
            "engine": self.engine.value,
            "state": self.state.value,
            "elicitation_items": [
                {
                    "item_id": item.item_id,
                    "modality": item.modality,
                    "is_attention_check": item.is_attention_check,
                }
                for item in self.elicitation_items
            ],
            "ratings": [
                {
                    "item_id": r.item_id,
                    "rating": r.rating,
                    "is_attention_check": r.is_attention_check,
                }
                for r in self.ratings
            ],
            "attention_passed": self.attention_passed,
            "recommendations": recs,
            "recommendations_n": self.recommendations_n,
            "mood_pre": self.mood_pre,
            "mood_post": self.mood_post,
            "reflections": self.reflections,
            "quality_feedback": self.quality_feedback,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


class EventLog:
    """Append-only JSON-lines log; one object per event, flushed per write."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("a", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with self._lock:
            self._handle.write(line + "\n")
            self._handle.flush()

    def close(self) -> None:
        with self._lock:
            if not self._handle.closed:
                self._handle.close()

    @staticmethod
    def read(path: str | Path) -> list[dict]:
        events = []
        with Path(path).open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise IntegrityError(f"{path}:{lineno}: invalid event ({exc.msg})") from None
        return events


def load_allowlist(path: str | Path) -> set[str]:
    """One painting id per line; blank lines and # comments ignored."""
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            ids.add(line)
    return ids


# ---------------------------------------------------------------------------
# payload validation
# ---------------------------------------------------------------------------

def _validate_mood(payload: dict) -> dict:
    if not isinstance(payload, dict):
        raise SessionValidationError("mood payload must be an object")
    phase = payload.get("phase")
    if phase not in ("pre", "post"):
        raise SessionValidationError("mood phase must be 'pre' or 'post'")
    category = payload.get("category")
    if not isinstance(category, str) or not category.strip():
        raise SessionValidationError("mood category must be a non-empty string")
    clean = {"phase": phase, "category": category}
    if "panas" in payload and payload["panas"] is not None:
        panas = payload["panas"]
        if (
            not isinstance(panas, list)
            or len(panas) != PANAS_ITEMS
            or not all(isinstance(v, int) and not isinstance(v, bool) and 1 <= v <= 5 for v in panas)
        ):
            raise SessionValidationError(
                f"panas must be a list of {PANAS_ITEMS} integer scores in 1..5"
            )
        clean["panas"] = panas
    return clean


def _validate_feedback(payload: dict) -> dict:
    if not isinstance(payload, dict):
        raise SessionValidationError("feedback payload must be an object")
    missing = [m for m in QUALITY_METRICS if m not in payload]
    if missing:
        raise SessionValidationError(f"missing quality metrics: {', '.join(missing)}")
    extra = [k for k in payload if k not in QUALITY_METRICS]
    if extra:
        raise SessionValidationError(f"unknown quality metrics: {', '.join(sorted(extra))}")
    clean = {}
    for metric in QUALITY_METRICS:
        value = payload[metric]
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
            raise SessionValidationError(f"quality metric {metric!r} must be an integer in 1..5")
        clean[metric] = value
    return clean


def _validate_reflection(payload: dict, recommended_ids: set[str]) -> dict:
    if not isinstance(payload, dict):
        raise SessionValidationError("reflection payload must be an object")
    painting_id = payload.get("painting_id")
    if painting_id not in recommended_ids:
        raise SessionValidationError(
            f"painting {painting_id!r} is not among this session's recommendations"
        )
    text = payload.get("text")
    if not isinstance(text, str) or not text.strip():
        raise SessionValidationError("reflection text must be a non-empty string")
    clean = {"painting_id": painting_id, "text": text}
    aspects = payload.get("aspects")
    if aspects is not None:
        if not isinstance(aspects, str):
            raise SessionValidationError("aspects must be a string when present")
        clean["aspects"] = aspects
    return clean


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------

class SessionService:
    """Materialized session store over engine indices and an event log.

    Independent sessions run concurrently; per-session operations serialize
    through one lock per session id. Engine indices are shared immutable
    reads.
    """

    def __init__(
        self,
        catalog: Catalog,
        indices: dict[Engine, SimilarityIndex],
        log_path: str | Path,
        allowlist: set[str] | None = None,
    ):
        self.catalog = catalog
        self.indices = {Engine(k): v for k, v in indices.items()}
        self.log = EventLog(log_path)
        self.sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._records = {r.id: r for r in catalog.music + catalog.paintings}

        # curation restricts elicitation sampling; the allowlist (therapist
        # review) additionally restricts what may be recommended
        self._allowlist = set(allowlist) if allowlist is not None else None
        self._music_pool = sorted(
            r.id for r in catalog.music if therapeutic_curation_filter(r.va)
        )
        painting_pool = [r.id for r in catalog.paintings if therapeutic_curation_filter(r.va)]
        if self._allowlist is not None:
            painting_pool = [pid for pid in painting_pool if pid in self._allowlist]
        self._painting_pool = sorted(painting_pool)

    def close(self) -> None:
        self.log.close()

    # -- helpers ------------------------------------------------------------

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    def _session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownItemError(f"no session {session_id!r}")
        return session

    def _append(self, event_type: str, session: Session, payload: dict, ts: float) -> None:
        self.log.append(
            {
                "ts": ts,
                "type": event_type,
                "session_id": session.session_id,
                "state_after": session.state.value,
                "payload": payload,
            }
        )

    def item_metadata(self, item_id: str) -> dict[str, str]:
        record = self._records.get(item_id)
        return dict(record.metadata) if record is not None else {}

    # -- protocol -----------------------------------------------------------

    def create_session(self, engine: str, seed: int | None = None) -> Session:
        try:
            engine = Engine(engine)
        except ValueError:
            raise SessionValidationError(
                f"unknown engine {engine!r}; expected one of {[e.value for e in Engine]}"
            ) from None
        if engine not in self.indices:
            raise NotReadyError(f"no index loaded for engine {engine.value!r}")

        rng = np.random.default_rng(seed)

        def sample(pool: list[str], modality: str) -> list[ElicitationItem]:
            if len(pool) < ITEMS_PER_MODALITY:
                raise InsufficientDataError(
                    f"need {ITEMS_PER_MODALITY} curated {modality} items, have {len(pool)}"
                )
            chosen = [pool[i] for i in rng.choice(len(pool), ITEMS_PER_MODALITY, replace=False)]
            attention_pos = int(rng.integers(0, ITEMS_PER_MODALITY))
            return [
                ElicitationItem(item_id, modality, i == attention_pos)
                for i, item_id in enumerate(chosen)
            ]

        items = sample(self._music_pool, MUSIC)
        if engine == Engine.VISUAL:
            items += sample(self._painting_pool, PAINTING)

        ts = time.time()
        session = Session(
            session_id=uuid.uuid4().hex,
            engine=engine,
            elicitation_items=items,
            created_at=ts,
            updated_at=ts,
        )
        with self._registry_lock:
            self.sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        self._append(
            "session_created",
            session,
            {
                "engine": engine.value,
                "seed": seed,
                "items": [
                    {
                        "item_id": item.item_id,
                        "modality": item.modality,
                        "is_attention_check": item.is_attention_check,
                    }
                    for item in items
                ],
            },
            ts,
        )
        return session

    def submit_ratings(self, session_id: str, ratings: list[dict]) -> Session:
        session = self._session(session_id)
        with self._lock_for(session_id):
            if session.state != SessionState.CREATED:
                raise SessionConflictError("ratings were already submitted for this session")
            if not isinstance(ratings, list):
                raise SessionValidationError("ratings must be a list")

            by_id: dict[str, int] = {}
            for entry in ratings:
                if not isinstance(entry, dict) or "item_id" not in entry or "rating" not in entry:
                    raise SessionValidationError("each rating needs 'item_id' and 'rating'")
                item_id = entry["item_id"]
                if item_id in by_id:
                    raise SessionValidationError(f"item {item_id!r} rated more than once")
                value = entry["rating"]
                if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                    raise SessionValidationError(
                        f"rating for {item_id!r} must be an integer in 1..5"
                    )
                by_id[item_id] = value

            expected = {item.item_id for item in session.elicitation_items}
            missing = expected - by_id.keys()
            extra = by_id.keys() - expected
            if missing:
                raise SessionValidationError(f"unrated items: {', '.join(sorted(missing))}")
            if extra:
                raise SessionValidationError(f"unexpected items: {', '.join(sorted(extra))}")

            stored = [
                PreferenceRating(
                    item_id=item.item_id,
                    rating=by_id[item.item_id],
                    is_attention_check=item.is_attention_check,
                )
                for item in session.elicitation_items
            ]
            attention_passed = all(
                r.rating == ATTENTION_REQUIRED_RATING
                for r in stored
                if r.is_attention_check
            )
            ts = time.time()
            session.ratings = stored
            session.attention_passed = attention_passed
            session.state = SessionState.ELICITED
            session.updated_at = ts
            self._append(
                "ratings_submitted",
                session,
                {
                    "ratings": [
                        {
                            "item_id": r.item_id,
                            "rating": r.rating,
                            "is_attention_check": r.is_attention_check,
                        }
                        for r in stored
                    ],
                    "attention_passed": attention_passed,
                },
                ts,
            )
            return session

    def get_recommendations(self, session_id: str, n: int = DEFAULT_TOP_N) -> RecommendationList:
        session = self._session(session_id)
        with self._lock_for(session_id):
            if session.state in (SessionState.RECOMMENDED, SessionState.COMPLETED):
                if n != session.recommendations_n:
                    raise SessionValidationError(
                        f"recommendations were already served with n={session.recommendations_n}"
                    )
                return session.recommendations
            if session.state != SessionState.ELICITED:
                raise SessionStateError("ratings must be submitted before recommendations")
            if n < 1:
                raise SessionValidationError(f"n must be >= 1, got {n}")

            modality = PAINTING if session.engine == Engine.VISUAL else MUSIC
            modal_ids = {item.item_id for item in session.items_of(modality)}
            ratings = [r for r in session.ratings if r.item_id in modal_ids]
            index = self.indices[session.engine]

            full = recommend(index, ratings, n=len(index.col_ids))
            entries = full.entries
            if self._allowlist is not None:
                entries = [e for e in entries if e.painting_id in self._allowlist]
            truncated = n > len(entries)
            result = RecommendationList(
                engine=session.engine,
                entries=entries[:n],
                weights=full.weights,
                truncated=truncated,
            )
            ts = time.time()
            session.recommendations = result
            session.recommendations_n = n
            session.state = SessionState.RECOMMENDED
            session.updated_at = ts
            self._append(
                "recommendations_served",
                session,
                {
                    "n": n,
                    "recommendations": {
                        "engine": result.engine.value,
                        "entries": [
                            {"painting_id": e.painting_id, "distance": e.distance}
                            for e in result.entries
                        ],
                        "weights": [[item_id, w] for item_id, w in result.weights],
                        "truncated": result.truncated,
                    },
                },
                ts,
            )
            return result

    def submit_mood(self, session_id: str, payload: dict) -> Session:
        session = self._session(session_id)
        with self._lock_for(session_id):
            clean = _validate_mood(payload)
            if clean["phase"] == "pre":
                if session.state not in (SessionState.CREATED, SessionState.ELICITED):
                    raise SessionStateError("pre-session mood must arrive before recommendations")
                if session.mood_pre is not None:
                    raise SessionValidationError("pre-session mood already submitted")
                session.mood_pre = clean
            else:
                if session.state != SessionState.RECOMMENDED:
                    raise SessionStateError("post-session mood requires served recommendations")
                if session.mood_post is not None:
                    raise SessionValidationError("post-session mood already submitted")
                session.mood_post = clean
            ts = time.time()
            session.updated_at = ts
            self._append("mood_submitted", session, clean, ts)
            return session

    def submit_reflections(self, session_id: str, payload) -> Session:
        session = self._session(session_id)
        with self._lock_for(session_id):
            if session.state != SessionState.RECOMMENDED:
                raise SessionStateError("reflections require served recommendations")
            recommended = set(session.recommendations.painting_ids())
            if isinstance(payload, dict) and "reflections" in payload:
                payload = payload["reflections"]
            entries = payload if isinstance(payload, list) else [payload]
            if not entries:
                raise SessionValidationError("no reflections provided")
            clean = [_validate_reflection(entry, recommended) for entry in entries]
            ts = time.time()
            session.reflections.extend(clean)
            session.updated_at = ts
            self._append("reflections_submitted", session, {"reflections": clean}, ts)
            return session

    def submit_feedback(self, session_id: str, payload: dict) -> Session:
        session = self._session(session_id)
        with self._lock_for(session_id):
            if session.state != SessionState.RECOMMENDED:
                raise SessionStateError("quality feedback requires served recommendations")
            if session.mood_post is None:
                raise SessionValidationError("post-session mood must be submitted before feedback")
            if session.quality_feedback is not None:
                raise SessionValidationError("quality feedback already submitted")
            clean = _validate_feedback(payload)
            ts = time.time()
            session.quality_feedback = clean
            session.state = SessionState.COMPLETED
            session.updated_at = ts
            self._append("feedback_submitted", session, clean, ts)
            return session


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def replay_sessions(log_path: str | Path) -> dict[str, Session]:
    """Rebuild session state purely from the event log."""
    sessions: dict[str, Session] = {}
    for event in EventLog.read(log_path):
        ts = event["ts"]
        session_id = event["session_id"]
        payload = event["payload"]
        event_type = event["type"]
        if event_type == "session_created":
            sessions[session_id] = Session(
                session_id=session_id,
                engine=Engine(payload["engine"]),
                elicitation_items=[
                    ElicitationItem(i["item_id"], i["modality"], i["is_attention_check"])
                    for i in payload["items"]
                ],
                created_at=ts,
                updated_at=ts,
            )
            continue
        session = sessions.get(session_id)
        if session is None:
            raise IntegrityError(f"event for unknown session {session_id!r}")
        if event_type == "ratings_submitted":
            session.ratings = [
                PreferenceRating(r["item_id"], r["rating"], r["is_attention_check"])
                for r in payload["ratings"]
            ]
            session.attention_passed = payload["attention_passed"]
        elif event_type == "recommendations_served":
            recs = payload["recommendations"]
            session.recommendations = RecommendationList(
                engine=Engine(recs["engine"]),
                entries=[
                    RecommendationEntry(e["painting_id"], e["distance"])
                    for e in recs["entries"]
                ],
                weights=[(item_id, w) for item_id, w in recs["weights"]],
                truncated=recs["truncated"],
            )
            session.recommendations_n = payload["n"]
        elif event_type == "mood_submitted":
            if payload["phase"] == "pre":
                session.mood_pre = payload
            else:
                session.mood_post = payload
        elif event_type == "reflections_submitted":
            session.reflections.extend(payload["reflections"])
        elif event_type == "feedback_submitted":
            session.quality_feedback = payload
        else:
            raise IntegrityError(f"unknown event type {event_type!r}")
        session.state = SessionState(event["state_after"])
        session.updated_at = ts
    return sessions


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

_STATUS_BY_CODE = {
    "validation-error": 400,
    "invalid-parameter": 400,
    "no-preferences": 400,
    "insufficient-data": 400,
    "unknown-item": 404,
    "state-error": 409,
    "conflict": 409,
    "not-ready": 503,
    "integrity-error": 500,
}


def create_app(service: SessionService, static_dir: str | Path | None = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        service.close()  # flush the event log on shutdown

    app = FastAPI(title="affectcdr session service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(AffectCdrError)
    async def handle_domain_error(request: Request, exc: AffectCdrError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(status_code=status, content={"code": exc.code, "message": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "engines": sorted(engine.value for engine in service.indices),
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)):
        seed = body.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise SessionValidationError("seed must be an integer when present")
        session = service.create_session(body.get("engine"), seed)
        return {
            "session_id": session.session_id,
            "engine": session.engine.value,
            "state": session.state.value,
        }

    @app.get("/sessions/{session_id}/elicitation")
    def get_elicitation(session_id: str):
        session = service._session(session_id)
        # attention flags are intentionally not exposed to clients
        return {
            "session_id": session.session_id,
            "engine": session.engine.value,
            "items": [
                {
                    "item_id": item.item_id,
                    "modality": item.modality,
                    "metadata": service.item_metadata(item.item_id),
                }
                for item in session.elicitation_items
            ],
        }

    @app.post("/sessions/{session_id}/ratings")
    def post_ratings(session_id: str, body: dict = Body(...)):
        session = service.submit_ratings(session_id, body.get("ratings"))
        return {"session_id": session.session_id, "state": session.state.value}

    @app.get("/sessions/{session_id}/recommendations")
    def get_recommendations(session_id: str, n: int = DEFAULT_TOP_N):
        result = service.get_recommendations(session_id, n)
        return {
            "session_id": session_id,
            "engine": result.engine.value,
            "truncated": result.truncated,
            "entries": [
                {
                    "painting_id": e.painting_id,
                    "distance": e.distance,
                    "metadata": service.item_metadata(e.painting_id),
                }
                for e in result.entries
            ],
        }

    @app.post("/sessions/{session_id}/mood")
    def post_mood(session_id: str, body: dict = Body(...)):
        session = service.submit_mood(session_id, body)
        return {"session_id": session.session_id, "state": session.state.value}

    @app.post("/sessions/{session_id}/reflections")
    def post_reflections(session_id: str, body=Body(...)):
        session = service.submit_reflections(session_id, body)
        return {"session_id": session.session_id, "state": session.state.value}

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: dict = Body(...)):
        session = service.submit_feedback(session_id, body)
        return {"session_id": session.session_id, "state": session.state.value}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=str(static_dir), html=True), name="webui")

    return app
