import logging
import time
from functools import wraps
from typing import Callable

import httpx

from snipforge.constants import GITHUB_API_URL, SEARCH_PAGE_SIZE
from snipforge.errors import AuthMissing, HostError, HostUnreachable, RateLimited

logger = logging.getLogger(__name__)

# Secondary rate limits come without a reset header; the host documents one minute
DEFAULT_RATE_LIMIT_WAIT = 60.0


class GitHub:
    # Class-level variables to store the API location, credentials and retry policy
    _api_url = GITHUB_API_URL
    _token = None
    _timeout = 30.0
    _transport = None
    _max_retries = 3
    _max_retry_wait = 60.0
    _sleep: Callable[[float], None] = time.sleep
    _clock: Callable[[], float] = time.time

    @classmethod
    def set_api_url(cls, api_url: str = GITHUB_API_URL) -> None:
        """Set the REST API base URL for all search operations.

        Args:
            api_url: Base URL of a GitHub-compatible REST API.
        """
        cls._api_url = api_url.rstrip("/")

    @classmethod
    def set_token(cls, token: str | None = None) -> None:
        """Set the API token. The token lives in memory only.

        Args:
            token: Bearer token, or None for unauthenticated requests.
        """
        cls._token = token

    @classmethod
    def set_transport(cls, transport: httpx.BaseTransport | None = None, timeout: float = 30.0) -> None:
        """Set the HTTP transport (tests pass an httpx.MockTransport).

        Args:
            transport: Transport used by every client; None means the network.
            timeout: Request timeout in seconds.
        """
        cls._transport = transport
        cls._timeout = timeout

    @classmethod
    def set_timeout(cls, timeout: float = 30.0) -> None:
        cls._timeout = timeout

    @classmethod
    def set_retry_policy(
        cls,
        max_retries: int = 3,
        max_retry_wait: float = 60.0,
        sleep: Callable[[float], None] | None = None,
        clock: Callable[[], float] | None = None,
    ) -> None:
        """Set how rate-limited requests are retried.

        Args:
            max_retries: Retries allowed per request after a rate-limit answer.
            max_retry_wait: Longest single wait honored, in seconds.
            sleep: Replacement for time.sleep.
            clock: Replacement for time.time.
        """
        cls._max_retries = max_retries
        cls._max_retry_wait = max_retry_wait
        cls._sleep = sleep or time.sleep
        cls._clock = clock or time.time

    @staticmethod
    def get_client(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            if kwargs.get("client"):
                return func(*args, **kwargs)

            headers = {
                "Accept": "application/vnd.github+json",
                "User-Agent": "snipforge",
            }
            if GitHub._token:
                headers["Authorization"] = f"Bearer {GitHub._token}"

            with httpx.Client(
                base_url=GitHub._api_url,
                headers=headers,
                timeout=GitHub._timeout,
                transport=GitHub._transport,
            ) as client:
                kwargs["client"] = client
                return func(*args, **kwargs)

        return wrapper

    @staticmethod
    def _retry_after(response: httpx.Response) -> float | None:
        """Seconds to wait before retrying, or None if the answer is not a rate limit."""
        if response.status_code not in (403, 429):
            return None

        retry_after = response.headers.get("Retry-After")
        if retry_after is not None:
            return max(float(retry_after), 0.0)

        if response.headers.get("X-RateLimit-Remaining") == "0":
            reset_ts = float(response.headers.get("X-RateLimit-Reset", "0"))
            return max(reset_ts - GitHub._clock(), 0.0)

        if response.status_code == 429:
            return DEFAULT_RATE_LIMIT_WAIT
        return None

    @staticmethod
    def _request(client: httpx.Client, path: str, params: dict) -> dict:
        """Run a GET request, honoring rate limits within the retry policy.

        Raises:
            RateLimited: The host still limits after max_retries, or asks for a longer wait than allowed.
            AuthMissing: The host rejected the credentials.
            HostUnreachable: The request never got an answer.
            HostError: Any other unexpected status.
        """
        for attempt in range(GitHub._max_retries + 1):
            request = client.build_request("GET", path, params=params)
            description = f"GET {request.url}"
            try:
                response = client.send(request)
            except httpx.TransportError as e:
                raise HostUnreachable(f"Host unreachable: {e}", request=description)

            if response.status_code == 200:
                return response.json()
            if response.status_code == 401:
                raise AuthMissing("Host rejected the API token", request=description)

            wait = GitHub._retry_after(response)
            if wait is None:
                raise HostError(f"Unexpected status {response.status_code}", request=description)
            if attempt >= GitHub._max_retries or wait > GitHub._max_retry_wait:
                raise RateLimited(f"Rate limited, host asks to wait {wait:.0f}s", request=description)

            logger.warning("Rate limited on %s, sleeping %.1f seconds (attempt %d)", description, wait, attempt + 1)
            GitHub._sleep(wait)

        raise RateLimited("Rate limited", request=path)  # pragma: no cover - loop always returns or raises

    # -------------------------Search------------------------- #

    @get_client
    @staticmethod
    def search_repositories_page(
        client: httpx.Client,
        *,
        query: str,
        page: int = 1,
        per_page: int = SEARCH_PAGE_SIZE,
    ) -> dict:
        """Fetch one page of repository search results sorted by stars.

        Args:
            client: The httpx client (injected by decorator).
            query: Host search query string.
            page: 1-based page number.
            per_page: Results per page (the host caps it at 100).

        Returns:
            dict with keys:
                - total_count: Number of matches the host reports
                - items: List of repository payloads
        """
        logger.debug("Searching repositories q=%r page=%d per_page=%d", query, page, per_page)
        payload = GitHub._request(
            client,
            "/search/repositories",
            {"q": query, "sort": "stars", "order": "desc", "page": page, "per_page": min(per_page, SEARCH_PAGE_SIZE)},
        )
        return {
            "total_count": int(payload.get("total_count", 0)),
            "items": payload.get("items", []),
        }
