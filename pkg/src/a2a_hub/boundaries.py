"""Boundary-aware credential handling for downstream targets.

The hub talks to agents across three trust boundaries: same project,
different project (public), and different account (IAM-protected). Only the
last one needs explicit identity-token material; this module hides that
discontinuity behind one call so the invocation path never branches on
boundary type itself.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol

# Cached tokens are re-issued this many seconds before their expiry.
REFRESH_MARGIN_S = 60.0

DEFAULT_TIMEOUT_S = 10.0


class BoundaryKind(str, Enum):
    SAME_PROJECT = "same_project"
    CROSS_PROJECT_PUBLIC = "cross_project_public"
    CROSS_ACCOUNT_IAM = "cross_account_iam"


class TargetConfigError(ValueError):
    """Downstream target failed startup validation."""


class TokenIssueError(Exception):
    """The token provider could not issue a credential.

    Surfaces as a degraded text answer through the containment layer, never
    as an HTTP 500 upstream.
    """


@dataclass(frozen=True)
class DownstreamTarget:
    id: str
    url: str
    boundary: BoundaryKind
    audience: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        if self.boundary is BoundaryKind.CROSS_ACCOUNT_IAM:
            if not self.audience:
                raise TargetConfigError(
                    f"target {self.id!r}: cross-account targets require an audience")
        elif self.audience is not None:
            raise TargetConfigError(
                f"target {self.id!r}: audience is only valid for cross-account targets")
        if self.timeout_s <= 0:
            raise TargetConfigError(f"target {self.id!r}: timeout must be positive")


@dataclass(frozen=True)
class BearerIdToken:
    token: str
    audience: str
    expires_at: float  # unix seconds


# None means "send no Authorization header at all": same-project backends
# are in-process and trust the hub, public targets must never carry a token.
AuthMaterial = BearerIdToken | None


class TokenProvider(Protocol):
    """Pluggable identity-token source.

    A production variant would call a cloud token endpoint; the shipped
    variant is the simulation issuer. Implementations must return a token
    whose audience equals the requested audience.
    """

    def issue(self, audience: str, caller_identity: str) -> BearerIdToken: ...


class TokenCache:
    """Per-audience cache of bearer tokens with an expiry refresh margin.

    Reads and refreshes are atomic under one lock; the clock is injectable
    so expiry behavior is testable without sleeping.
    """

    def __init__(self, now: Callable[[], float] = time.time):
        self._now = now
        self._lock = threading.Lock()
        self._tokens: dict[str, BearerIdToken] = {}

    def get_or_issue(self, audience: str, caller_identity: str,
                     provider: TokenProvider) -> BearerIdToken:
        with self._lock:
            cached = self._tokens.get(audience)
            if cached is not None and self._now() < cached.expires_at - REFRESH_MARGIN_S:
                return cached
            token = provider.issue(audience, caller_identity)
            if token.audience != audience:
                raise TokenIssueError(
                    f"provider issued audience {token.audience!r}, wanted {audience!r}")
            self._tokens[audience] = token
            return token


def acquire_credential(target: DownstreamTarget, provider: TokenProvider,
                       cache: TokenCache, caller_identity: str) -> AuthMaterial:
    """Produce the auth material a target's boundary requires.

    Same-project and cross-project-public targets are called without any
    Authorization material; cross-account targets get a cached bearer token
    for the target audience.
    """
    if target.boundary is not BoundaryKind.CROSS_ACCOUNT_IAM:
        return None
    assert target.audience is not None  # enforced by DownstreamTarget
    try:
        return cache.get_or_issue(target.audience, caller_identity, provider)
    except TokenIssueError:
        raise
    except Exception as exc:
        raise TokenIssueError(f"token provider failed: {exc}") from exc


def attach_auth(headers: dict[str, str], material: AuthMaterial) -> dict[str, str]:
    """Return headers with exactly the Authorization state the material
    dictates: absent for None, a single Bearer header otherwise."""
    headers = dict(headers)
    headers.pop("Authorization", None)
    if material is not None:
        headers["Authorization"] = f"Bearer {material.token}"
    return headers
