"""Embedding-exchange contract between the engine and any extractor.

Two transports share one record layout: batch files ("DLXB") hand bulk
per-occurrence embeddings to the index builder, and a length-prefixed
binary protocol over a stream socket answers on-demand requests for
in-context embeddings (original or candidate-substituted sentences).

Frame layout (little-endian throughout):
    frame    := u32 payload_length, payload
    request  := "DLXQ" u16 version, u32 seq, u32 count, request*
    request* := u32 sentence_len + UTF-8, u32 start, u32 end,
                u8 has_replacement, [u16 len + UTF-8]
    response := "DLXR" u16 version, u32 seq, u32 dim, u16 layer_count,
                u16 layer_ids[], u32 count, record*
    record*  := u8 status; ok(0) -> batch record layout,
                err(1) -> u16 message_len + UTF-8

Spans are byte offsets into the UTF-8 encoding of the sentence. The
extractor owns tokenisation and subword-to-word averaging; the engine
only ever sees whole-word vectors.
"""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError, ProviderError
from .seeds import derive_seed
from .vectors import EmbeddingSpec, LayeredEmbedding

BATCH_MAGIC = b"DLXB"
REQUEST_MAGIC = b"DLXQ"
RESPONSE_MAGIC = b"DLXR"
PROTOCOL_VERSION = 1
MAX_FRAME = 256 * 1024 * 1024


# ---------------------------------------------------------------------------
# byte spans

def span_text(sentence: str, start: int, end: int) -> str:
    """Decode the [start, end) byte span of the sentence's UTF-8 encoding."""
    raw = sentence.encode("utf-8")
    if not (0 <= start < end <= len(raw)):
        raise ContractError(f"span [{start}, {end}) out of range for {len(raw)}-byte sentence")
    try:
        return raw[start:end].decode("utf-8")
    except UnicodeDecodeError:
        raise ContractError(f"span [{start}, {end}) splits a multi-byte character")


def replace_span(sentence: str, start: int, end: int, replacement: str) -> tuple[str, int, int]:
    """Splice `replacement` over the byte span; returns (sentence, start, end')."""
    span_text(sentence, start, end)  # validates
    raw = sentence.encode("utf-8")
    repl = replacement.encode("utf-8")
    out = raw[:start] + repl + raw[end:]
    return out.decode("utf-8"), start, start + len(repl)


@dataclass(frozen=True)
class InContextRequest:
    sentence: str
    start: int
    end: int
    replacement: str | None = None

    def __post_init__(self):
        if self.replacement is not None and not self.replacement:
            raise ContractError("replacement must be non-empty when present")

    def effective(self) -> tuple[str, int, int]:
        """Sentence and span after applying any replacement."""
        if self.replacement is None:
            span_text(self.sentence, self.start, self.end)
            return self.sentence, self.start, self.end
        return replace_span(self.sentence, self.start, self.end, self.replacement)


@dataclass(frozen=True)
class RequestFailure:
    """Per-request extractor-side failure; does not poison the batch."""
    message: str


# ---------------------------------------------------------------------------
# batch records and files

@dataclass(frozen=True)
class BatchRecord:
    word: str
    sentence_id: int
    vectors: dict[int, np.ndarray]  # layer -> float32 (dim,)

    def embedding(self, spec: EmbeddingSpec) -> LayeredEmbedding:
        return LayeredEmbedding(spec, dict(self.vectors))


@dataclass
class ExchangeBatch:
    spec: EmbeddingSpec
    records: list[BatchRecord]

    def check(self) -> None:
        for i, rec in enumerate(self.records):
            if set(rec.vectors) != set(self.spec.layer_set):
                raise ContractError(f"record {i} layer keys do not match batch spec")
            for layer, vec in rec.vectors.items():
                if vec.shape != (self.spec.dim,):
                    raise ContractError(f"record {i} layer {layer} has shape {vec.shape}")
                if not np.all(np.isfinite(vec)):
                    raise ContractError(f"record {i} layer {layer} has non-finite values")


def _pack_record(rec: BatchRecord, layer_set: tuple[int, ...]) -> bytes:
    word_bytes = rec.word.encode("utf-8")
    parts = [struct.pack("<H", len(word_bytes)), word_bytes, struct.pack("<Q", rec.sentence_id)]
    for layer in layer_set:
        parts.append(np.ascontiguousarray(rec.vectors[layer], dtype="<f4").tobytes())
    return b"".join(parts)


class _Cursor:
    def __init__(self, blob: bytes, path: str | None):
        self.blob = blob
        self.pos = 0
        self.path = path

    def need(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"truncated while reading {what}", path=self.path, offset=self.pos)
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk


def _unpack_record(cur: _Cursor, spec: EmbeddingSpec, label: str) -> BatchRecord:
    (wlen,) = struct.unpack("<H", cur.need(2, f"{label} word length"))
    word = cur.need(wlen, f"{label} word").decode("utf-8")
    (sid,) = struct.unpack("<Q", cur.need(8, f"{label} sentence id"))
    vectors = {}
    for layer in spec.layer_set:
        raw = cur.need(4 * spec.dim, f"{label} layer {layer} vector")
        vectors[layer] = np.frombuffer(raw, dtype="<f4").copy()
    return BatchRecord(word=word, sentence_id=sid, vectors=vectors)


def write_batch(batch: ExchangeBatch, path) -> None:
    batch.check()
    spec = batch.spec
    with open(path, "wb") as fh:
        fh.write(BATCH_MAGIC)
        fh.write(struct.pack("<HIH", PROTOCOL_VERSION, spec.dim, len(spec.layer_set)))
        fh.write(struct.pack(f"<{len(spec.layer_set)}H", *spec.layer_set))
        fh.write(struct.pack("<I", len(batch.records)))
        for rec in batch.records:
            fh.write(_pack_record(rec, spec.layer_set))


def read_batch(path) -> ExchangeBatch:
    from pathlib import Path

    cur = _Cursor(Path(path).read_bytes(), str(path))
    if cur.need(4, "magic") != BATCH_MAGIC:
        raise FormatError("bad magic, not a batch file", path=str(path), offset=0)
    version, dim, n_layers = struct.unpack("<HIH", cur.need(8, "header"))
    if version != PROTOCOL_VERSION:
        raise FormatError(f"unsupported batch version {version}", path=str(path), offset=4)
    if dim < 1 or n_layers < 1:
        raise FormatError(f"invalid header (dim={dim}, layers={n_layers})",
                          path=str(path), offset=6)
    layer_ids = struct.unpack(f"<{n_layers}H", cur.need(2 * n_layers, "layer ids"))
    spec = EmbeddingSpec(dim=dim, num_layers=max(layer_ids), layer_set=tuple(layer_ids))
    (count,) = struct.unpack("<I", cur.need(4, "record count"))
    records = [_unpack_record(cur, spec, f"record {i}") for i in range(count)]
    if cur.pos != len(cur.blob):
        raise FormatError(f"{len(cur.blob) - cur.pos} trailing bytes",
                          path=str(path), offset=cur.pos)
    batch = ExchangeBatch(spec=spec, records=records)
    batch.check()
    return batch


# ---------------------------------------------------------------------------
# wire framing

def encode_request_frame(seq: int, requests: list[InContextRequest]) -> bytes:
    parts = [REQUEST_MAGIC, struct.pack("<HII", PROTOCOL_VERSION, seq, len(requests))]
    for req in requests:
        raw = req.sentence.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<IIB", req.start, req.end, 1 if req.replacement else 0))
        if req.replacement:
            repl = req.replacement.encode("utf-8")
            parts.append(struct.pack("<H", len(repl)))
            parts.append(repl)
    return b"".join(parts)


def decode_request_frame(payload: bytes) -> tuple[int, list[InContextRequest]]:
    cur = _Cursor(payload, None)
    if cur.need(4, "request magic") != REQUEST_MAGIC:
        raise FormatError("bad request magic", offset=0)
    version, seq, count = struct.unpack("<HII", cur.need(10, "request header"))
    if version != PROTOCOL_VERSION:
        raise FormatError(f"unsupported protocol version {version}", offset=4)
    requests = []
    for i in range(count):
        (slen,) = struct.unpack("<I", cur.need(4, f"request {i} sentence length"))
        sentence = cur.need(slen, f"request {i} sentence").decode("utf-8")
        start, end, has_repl = struct.unpack("<IIB", cur.need(9, f"request {i} span"))
        replacement = None
        if has_repl:
            (rlen,) = struct.unpack("<H", cur.need(2, f"request {i} replacement length"))
            replacement = cur.need(rlen, f"request {i} replacement").decode("utf-8")
        requests.append(InContextRequest(sentence, start, end, replacement))
    return seq, requests


def encode_response_frame(seq: int, spec: EmbeddingSpec,
                          results: list) -> bytes:
    parts = [
        RESPONSE_MAGIC,
        struct.pack("<HI", PROTOCOL_VERSION, seq),
        struct.pack("<IH", spec.dim, len(spec.layer_set)),
        struct.pack(f"<{len(spec.layer_set)}H", *spec.layer_set),
        struct.pack("<I", len(results)),
    ]
    for i, res in enumerate(results):
        if isinstance(res, RequestFailure):
            msg = res.message.encode("utf-8")[:0xFFFF]
            parts.append(struct.pack("<BH", 1, len(msg)))
            parts.append(msg)
        else:
            word, embedding = res
            rec = BatchRecord(word=word, sentence_id=i,
                              vectors={l: np.asarray(embedding.vectors[l], dtype=np.float32)
                                       for l in spec.layer_set})
            parts.append(struct.pack("<B", 0))
            parts.append(_pack_record(rec, spec.layer_set))
    return b"".join(parts)


def decode_response_frame(payload: bytes) -> tuple[int, EmbeddingSpec, list]:
    cur = _Cursor(payload, None)
    if cur.need(4, "response magic") != RESPONSE_MAGIC:
        raise FormatError("bad response magic", offset=0)
    version, seq = struct.unpack("<HI", cur.need(6, "response header"))
    if version != PROTOCOL_VERSION:
        raise FormatError(f"unsupported protocol version {version}", offset=4)
    dim, n_layers = struct.unpack("<IH", cur.need(6, "response dims"))
    layer_ids = struct.unpack(f"<{n_layers}H", cur.need(2 * n_layers, "response layer ids"))
    spec = EmbeddingSpec(dim=dim, num_layers=max(layer_ids), layer_set=tuple(layer_ids))
    (count,) = struct.unpack("<I", cur.need(4, "response count"))
    results: list = []
    for i in range(count):
        (status,) = struct.unpack("<B", cur.need(1, f"record {i} status"))
        if status == 1:
            (mlen,) = struct.unpack("<H", cur.need(2, f"record {i} error length"))
            results.append(RequestFailure(cur.need(mlen, f"record {i} error").decode("utf-8")))
        elif status == 0:
            rec = _unpack_record(cur, spec, f"record {i}")
            results.append(rec.embedding(spec))
        else:
            raise FormatError(f"record {i} has unknown status {status}", offset=cur.pos - 1)
    return seq, spec, results


def send_frame(sock: socket.socket, payload: bytes) -> None:
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def recv_frame(sock: socket.socket) -> bytes | None:
    """Next frame payload, or None on clean EOF between frames."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("<I", header)
    if length > MAX_FRAME:
        raise FormatError(f"frame of {length} bytes exceeds limit")
    if length == 0:
        return b""
    payload = _recv_exact(sock, length)
    if payload is None:
        raise FormatError("connection closed mid-frame")
    return payload


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise FormatError("connection closed mid-frame")
            return None
        buf += chunk
    return buf


# ---------------------------------------------------------------------------
# providers

def stub_vectors(sentence: str, start: int, end: int, spec: EmbeddingSpec,
                 seed: int) -> dict[int, np.ndarray]:
    """Deterministic fake per-layer vectors keyed by the effective text/span."""
    out = {}
    for layer in spec.layer_set:
        rng = np.random.default_rng(
            derive_seed(seed, "stub", str(layer), f"{start}:{end}", sentence))
        out[layer] = rng.standard_normal(spec.dim).astype(np.float32)
    return out


class StubProvider:
    """In-process provider with hash-seeded deterministic embeddings.

    A request whose replacement equals the original span text yields
    bit-identical vectors to the no-replacement request, because only the
    effective sentence and span enter the derivation.
    """

    def __init__(self, spec: EmbeddingSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed

    def fetch(self, requests: list[InContextRequest]) -> list:
        results: list = []
        for req in requests:
            try:
                sentence, start, end = req.effective()
            except ContractError as exc:
                results.append(RequestFailure(str(exc)))
                continue
            vectors = stub_vectors(sentence, start, end, self.spec, self.seed)
            results.append(LayeredEmbedding(self.spec, vectors))
        return results


class SocketProvider:
    """Client for the framed request/response protocol."""

    def __init__(self, address: tuple[str, int] | str, timeout: float = 30.0):
        self.address = address
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._seq = 0
        self._lock = threading.Lock()

    def _connect(self) -> socket.socket:
        if self._sock is not None:
            return self._sock
        try:
            if isinstance(self.address, str):
                sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
                sock.settimeout(self.timeout)
                sock.connect(self.address)
            else:
                sock = socket.create_connection(self.address, timeout=self.timeout)
        except OSError as exc:
            raise ProviderError(f"cannot reach extractor at {self.address}: {exc}")
        self._sock = sock
        return sock

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def fetch(self, requests: list[InContextRequest]) -> list:
        with self._lock:
            sock = self._connect()
            self._seq += 1
            seq = self._seq
            try:
                send_frame(sock, encode_request_frame(seq, requests))
                payload = recv_frame(sock)
            except (OSError, FormatError) as exc:
                self.close()
                raise ProviderError(f"extractor channel failed: {exc}")
            if payload is None:
                self.close()
                raise ProviderError("extractor closed the connection")
            rseq, _spec, results = decode_response_frame(payload)
            if rseq != seq:
                self.close()
                raise ProviderError(f"response sequence {rseq} does not match request {seq}")
            if len(results) != len(requests):
                raise ProviderError(
                    f"expected {len(requests)} records, got {len(results)}")
            return results


def make_provider(endpoint: str, spec: EmbeddingSpec | None = None):
    """Build a provider from an endpoint string.

    Formats: "stub:SEED" (needs spec), "tcp:HOST:PORT", "unix:PATH".
    """
    from .errors import ConfigError

    if endpoint.startswith("stub"):
        if spec is None:
            raise ConfigError("stub provider needs --dim and --layers to define its spec")
        seed = 0
        if ":" in endpoint:
            _, _, tail = endpoint.partition(":")
            try:
                seed = int(tail)
            except ValueError:
                raise ConfigError(f"bad stub seed {tail!r}")
        return StubProvider(spec, seed)
    if endpoint.startswith("unix:"):
        return SocketProvider(endpoint[len("unix:"):])
    if endpoint.startswith("tcp:"):
        endpoint = endpoint[len("tcp:"):]
    host, sep, port = endpoint.rpartition(":")
    if not sep:
        raise ConfigError(f"cannot parse provider endpoint {endpoint!r}")
    try:
        return SocketProvider((host, int(port)))
    except ValueError:
        raise ConfigError(f"bad provider port in {endpoint!r}")


def make_stub_batch(sentences: list[str], manifest_rows, spec: EmbeddingSpec,
                    seed: int) -> ExchangeBatch:
    """Synthesize a batch a stub extractor would emit for a manifest.

    Vectors agree with StubProvider for the same (sentence, span, seed),
    so fixture pipelines are end-to-end consistent without a model.
    """
    records = []
    for row in manifest_rows:
        if row.sentence_id >= len(sentences):
            raise ContractError(f"manifest row references sentence {row.sentence_id}, "
                                f"corpus has {len(sentences)}")
        sentence = sentences[row.sentence_id]
        vectors = stub_vectors(sentence, row.start, row.end, spec, seed)
        records.append(BatchRecord(word=row.word, sentence_id=row.sentence_id, vectors=vectors))
    return ExchangeBatch(spec=spec, records=records)


class StubProtocolServer:
    """Loopback reference server for the wire protocol (tests, demos).

    Serves stub embeddings over TCP with the same derivation as
    StubProvider; the production counterpart is the external extractor.
    """

    def __init__(self, spec: EmbeddingSpec, seed: int = 0, host: str = "127.0.0.1",
                 port: int = 0):
        self.spec = spec
        self.seed = seed
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(8)
        self.address = self._listener.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def start(self) -> "StubProtocolServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        try:
            poke = socket.create_connection(self.address, timeout=1)
            poke.close()
        except OSError:
            pass
        self._listener.close()

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            if self._stop.is_set():
                conn.close()
                return
            threading.Thread(target=self._handle, args=(conn,), daemon=True).start()

    def _handle(self, conn: socket.socket) -> None:
        with conn:
            while True:
                try:
                    payload = recv_frame(conn)
                except FormatError:
                    return  # malformed frame closes the connection
                if payload is None:
                    return
                try:
                    seq, requests = decode_request_frame(payload)
                except FormatError:
                    return
                results = []
                for req in requests:
                    try:
                        sentence, start, end = req.effective()
                        emb = LayeredEmbedding(
                            self.spec, stub_vectors(sentence, start, end, self.spec, self.seed))
                        results.append((span_text(sentence, start, end), emb))
                    except ContractError as exc:
                        results.append(RequestFailure(str(exc)))
                send_frame(conn, encode_response_frame(seq, self.spec, results))
