from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import List, Optional, Sequence

import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from ..config import RemoteConfig, SerializerConfig
from ..errors import BackendUnavailable
from ..models.catalog import TechniqueCatalog
from ..models.events import EventTrace
from ..models.verdict import Verdict
from ..utils.logging import get_logger
from ..utils.prompt import build_prompt
from ..utils.render import serialize_trace
from .base import Detector, verdict_from_output

logger = get_logger(__name__)  # pylint: disable=invalid-name

RETRY_STATUSES = (429, 500, 502, 503, 504)


class RemoteDetector(Detector):
    """
    Text-completion backend. The prompt is POSTed as `{"model", "prompt"}` and the reply's
    `completion` string is normalised onto the label set.
    """

    name = "remote"

    def __init__(
        self,
        url: str,
        api_key: str = "",
        model: str = "",
        timeout_s: float = 60.0,
        retries: int = 3,
        backoff_factor: float = 0.5,
        max_workers: int = 4,
        tz: str = "UTC",
        budget: Optional[int] = 120_000,
        session: Optional[requests.Session] = None,
    ):
        self.url = url
        self.api_key = api_key
        self.model = model
        self.timeout_s = timeout_s
        self.max_workers = max(1, max_workers)
        self.tz = tz
        self.budget = budget
        self.session = session or self._make_session(retries, backoff_factor)

    @staticmethod
    def _make_session(retries: int, backoff_factor: float) -> requests.Session:
        retry = Retry(
            total=retries,
            backoff_factor=backoff_factor,
            status_forcelist=RETRY_STATUSES,
            allowed_methods=frozenset({"POST"}),
            raise_on_status=False,
        )
        session = requests.Session()
        adapter = HTTPAdapter(max_retries=retry)
        session.mount("http://", adapter)
        session.mount("https://", adapter)
        return session

    @classmethod
    def from_config(
        cls,
        remote: RemoteConfig,
        serializer: Optional[SerializerConfig] = None,
        **kwargs,
    ) -> "RemoteDetector":
        serializer = serializer or SerializerConfig()
        return cls(
            url=remote.url,
            api_key=remote.api_key,
            model=remote.model,
            timeout_s=remote.timeout_s,
            retries=remote.retries,
            backoff_factor=remote.backoff_factor,
            max_workers=remote.max_workers,
            tz=serializer.tz,
            budget=serializer.budget,
            **kwargs,
        )

    def complete(self, prompt: str) -> str:
        if not self.url:
            raise BackendUnavailable("no remote endpoint configured (set TRACEWARDEN_REMOTE_URL)")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self.session.post(
                self.url,
                json={"model": self.model, "prompt": prompt},
                headers=headers,
                timeout=self.timeout_s,
            )
            response.raise_for_status()
            completion = response.json()["completion"]
        except requests.RequestException as e:
            logger.warning(f"Remote detector request failed: {e}")
            raise BackendUnavailable(str(e)) from e
        except (ValueError, KeyError, TypeError) as e:
            raise BackendUnavailable(f"malformed completion body: {e!r}") from e
        if not isinstance(completion, str):
            raise BackendUnavailable(f"completion must be a string, got {type(completion).__name__}")
        return completion

    def prompt_for(self, trace: EventTrace, catalog: TechniqueCatalog) -> str:
        return build_prompt(catalog, serialize_trace(trace, tz=self.tz, budget=self.budget))

    def _detect(self, trace: EventTrace, catalog: TechniqueCatalog) -> Verdict:
        raw = self.complete(self.prompt_for(trace, catalog))
        return verdict_from_output(raw, catalog, trace_ref=trace.session_id)

    def _detect_or_invalid(self, trace: EventTrace, catalog: TechniqueCatalog) -> Verdict:
        try:
            return self.detect(trace, catalog)
        except BackendUnavailable as e:
            return Verdict.invalid(trace_ref=trace.session_id, raw_output=f"backend unavailable: {e}")

    def detect_many(self, traces: Sequence[EventTrace], catalog: TechniqueCatalog) -> List[Verdict]:
        """
        Several traces in flight at once. Output order follows input order; a backend failure on one
        trace becomes an invalid verdict for that trace only.
        """
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            verdicts = list(pool.map(lambda t: self._detect_or_invalid(t, catalog), traces))
        return [
            v if v.trace_ref or not t.session_id else replace(v, trace_ref=t.session_id)
            for v, t in zip(verdicts, traces)
        ]

    def close(self) -> None:
        self.session.close()
