# Adapted from the tshark Popen/terminate capture wrapper used for SMB setup debugging
import os
import socket
import subprocess
import time
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, MutableMapping, Optional, Sequence, Tuple

from ..config import CaptureConfig
from ..errors import (
    CaptureSessionError,
    CaptureStartFailed,
    FirewallDenied,
    ProxyUnreachable,
    RestoreIncomplete,
)
from ..utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name

PROXY_VARIABLES = ("HTTP_PROXY", "HTTPS_PROXY", "http_proxy", "https_proxy")


class MutationKind(str, Enum):
    ENV = "env"
    FIREWALL = "firewall"
    CAPTURE = "capture"


@dataclass
class Mutation:
    kind: MutationKind
    target: str
    undo: Callable[[], None] = field(repr=False)

    @property
    def name(self) -> str:
        return f"{self.kind.value}:{self.target}"


@dataclass(frozen=True)
class SessionArtifacts:
    pcap_path: str
    flow_log_path: str
    warnings: Tuple[str, ...] = ()


@dataclass
class SessionHandle:
    """Everything a session changed on the host, in the order it was changed."""

    pcap_path: str
    flow_log_path: str
    rule_id: str
    mutations: List[Mutation] = field(default_factory=list)
    capture_process: Optional[subprocess.Popen] = None
    warnings: List[str] = field(default_factory=list)
    result: Optional[SessionArtifacts] = None

    @property
    def closed(self) -> bool:
        return self.result is not None

    def describe(self) -> List[str]:
        return [m.name for m in self.mutations]


def split_host_port(addr: str) -> Tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {addr!r}")
    return host.strip("[]"), int(port)


def format_command(template: Sequence[str], variables: Dict[str, object]) -> List[str]:
    try:
        return [str(item).format(**variables) for item in template]
    except KeyError as e:
        raise CaptureSessionError(f"command template uses unknown variable {e.args[0]!r}") from e


def probe_proxy(addr: str, timeout_s: float) -> None:
    host, port = split_host_port(addr)
    try:
        with socket.create_connection((host, port), timeout=timeout_s):
            pass
    except OSError as e:
        raise ProxyUnreachable(f"MITM proxy at {addr} is not accepting connections: {e}") from e


def _run(argv: List[str]) -> subprocess.CompletedProcess:
    return subprocess.run(argv, stdin=subprocess.DEVNULL, capture_output=True, text=True, check=False)


def _rollback(handle: SessionHandle) -> List[str]:
    failed = []
    while handle.mutations:
        mutation = handle.mutations.pop()
        try:
            mutation.undo()
            logger.info(f"Reverted {mutation.name}")
        except Exception as e:  # keep reverting the rest
            logger.warning(f"Could not revert {mutation.name}: {e}")
            failed.append(mutation.name)
    return failed


def _set_proxy_env(handle: SessionHandle, env: MutableMapping[str, str], proxy_url: str) -> None:
    for var in PROXY_VARIABLES:
        previous = env.get(var)

        def undo(var=var, previous=previous):
            if previous is None:
                env.pop(var, None)
            else:
                env[var] = previous

        env[var] = proxy_url
        handle.mutations.append(Mutation(MutationKind.ENV, var, undo))


def _install_firewall_rule(handle: SessionHandle, cfg: CaptureConfig, variables: Dict[str, object]) -> None:
    add = format_command(cfg.firewall_add_command, variables)
    delete = format_command(cfg.firewall_del_command, variables)
    try:
        completed = _run(add)
    except OSError as e:
        raise FirewallDenied(f"cannot run {add[0]!r}: {e}") from e
    if completed.returncode != 0:
        raise FirewallDenied(f"{' '.join(add)} exited {completed.returncode}: {completed.stderr.strip()}")

    def undo():
        result = _run(delete)
        if result.returncode != 0:
            raise CaptureSessionError(f"{' '.join(delete)} exited {result.returncode}: {result.stderr.strip()}")

    handle.mutations.append(Mutation(MutationKind.FIREWALL, handle.rule_id, undo))


def _start_capture(handle: SessionHandle, cfg: CaptureConfig, variables: Dict[str, object]) -> None:
    argv = format_command(cfg.capture_command, variables)
    try:
        process = subprocess.Popen(argv, stdin=subprocess.DEVNULL, stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
    except OSError as e:
        raise CaptureStartFailed(f"cannot start {argv[0]!r}: {e}") from e

    def undo():
        if process.poll() is not None:
            handle.warnings.append(f"capture process {process.pid} had already exited with code {process.returncode}")
            logger.warning(handle.warnings[-1])
            return
        process.terminate()
        try:
            process.wait(timeout=cfg.stop_timeout_s)
        except subprocess.TimeoutExpired:
            process.kill()
            process.wait(timeout=cfg.stop_timeout_s)

    handle.capture_process = process
    handle.mutations.append(Mutation(MutationKind.CAPTURE, str(process.pid), undo))

    time.sleep(cfg.startup_grace_s)
    if process.poll() is not None:
        stderr = process.stderr.read().decode("utf-8", errors="replace").strip() if process.stderr else ""
        raise CaptureStartFailed(f"{argv[0]} exited with code {process.returncode} during startup: {stderr}")


def begin_session(cfg: CaptureConfig, env: Optional[MutableMapping[str, str]] = None) -> SessionHandle:
    """
    Route HTTP(S) through the proxy, block UDP/443 and start the packet capture. On any failure every
    change already made is reverted before the error propagates.
    """
    env = os.environ if env is None else env
    handle = SessionHandle(
        pcap_path=os.path.abspath(cfg.pcap_path),
        flow_log_path=os.path.abspath(cfg.flow_log_path),
        rule_id=f"tracewarden-{uuid.uuid4().hex[:8]}",
    )
    proxy_host, proxy_port = split_host_port(cfg.proxy_addr)
    variables: Dict[str, object] = {
        **cfg.template_vars,
        "interface": cfg.interface,
        "pcap_path": handle.pcap_path,
        "flow_log_path": handle.flow_log_path,
        "rule_id": handle.rule_id,
        "proxy_host": proxy_host,
        "proxy_port": proxy_port,
    }

    try:
        probe_proxy(cfg.proxy_addr, cfg.proxy_probe_timeout_s)
        _set_proxy_env(handle, env, f"http://{cfg.proxy_addr}")
        if cfg.block_udp_443:
            _install_firewall_rule(handle, cfg, variables)
        _start_capture(handle, cfg, variables)
    except CaptureSessionError as e:
        failed = _rollback(handle)
        if failed:
            raise RestoreIncomplete(failed, detail=str(e)) from e
        raise

    logger.info(f"Capture session started: {', '.join(handle.describe())}")
    return handle


def end_session(handle: SessionHandle) -> SessionArtifacts:
    """Stop the capture and revert every mutation. Calling it again returns the same artifacts."""
    if handle.result is not None:
        return handle.result
    failed = _rollback(handle)
    handle.result = SessionArtifacts(
        pcap_path=handle.pcap_path,
        flow_log_path=handle.flow_log_path,
        warnings=tuple(handle.warnings),
    )
    if failed:
        raise RestoreIncomplete(failed)
    logger.info(f"Capture session ended; packets in {handle.pcap_path}")
    return handle.result


@contextmanager
def capture_session(cfg: CaptureConfig, env: Optional[MutableMapping[str, str]] = None) -> Iterator[SessionHandle]:
    handle = begin_session(cfg, env)
    try:
        yield handle
    finally:
        end_session(handle)


@dataclass(frozen=True)
class CapturedRun:
    returncode: int
    artifacts: SessionArtifacts


def run_captured(
    cfg: CaptureConfig,
    argv: Sequence[str],
    env: Optional[MutableMapping[str, str]] = None,
) -> CapturedRun:
    """Run a child command inside a capture session; the child inherits the proxy environment."""
    if not argv:
        raise ValueError("no child command given")
    env = os.environ if env is None else env
    with capture_session(cfg, env) as handle:
        try:
            returncode = subprocess.run(list(argv), env=dict(env), check=False).returncode
        except OSError as e:
            logger.error(f"Cannot run {argv[0]!r}: {e}")
            returncode = 127
    return CapturedRun(returncode=returncode, artifacts=end_session(handle))
