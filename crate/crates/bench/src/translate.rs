//! Hash translation server over a local TCP socket.
//!
//! Dictionary files:
//! - hashes file: one `<id> <digest hex>` pair per line;
//! - compressed file: back-to-back containers `id: u64 | len: u32 | bytes`,
//!   all integers big-endian.
//!
//! Wire protocol, big-endian:
//! - request: `id: u64 | digest: 32 bytes`;
//! - reply `0x00` followed by the stored container when `(id, digest)` is
//!   known;
//! - reply `0x01 | id: u64 | digest` (the NotFound record) otherwise.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use arranger_core::codec::Reader;
use arranger_core::crypto::{CompressedBatch, Digest, DIGEST_LEN};

use crate::error::BenchError;

pub const FOUND: u8 = 0x00;
pub const NOT_FOUND: u8 = 0x01;
const REQUEST_LEN: usize = 8 + DIGEST_LEN;

/// Maps `(id, digest)` to the encoded compressed-batch container.
#[derive(Clone, Debug, Default)]
pub struct Dictionary {
    entries: HashMap<(u64, Digest), Vec<u8>>,
}

impl Dictionary {
    pub fn insert(&mut self, id: u64, digest: Digest, compressed: &CompressedBatch) {
        self.entries.insert((id, digest), compressed.encode());
    }

    pub fn get(&self, id: u64, digest: &Digest) -> Option<&[u8]> {
        self.entries.get(&(id, *digest)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Joins a hashes file with a compressed file on the batch id.
    pub fn load(hashes: &Path, compressed: &Path) -> Result<Self, BenchError> {
        let blobs = fs::read(compressed)?;
        let mut r = Reader::new(&blobs);
        let mut by_id = HashMap::new();
        while r.remaining() > 0 {
            let c = CompressedBatch::decode_from(&mut r)?;
            by_id.insert(c.id, c);
        }
        let text = fs::read_to_string(hashes)?;
        let mut dict = Dictionary::default();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| BenchError::Dictionary {
                path: hashes.display().to_string(),
                line: k + 1,
                reason,
            };
            let (id, hex) = line
                .split_once(' ')
                .ok_or_else(|| bad("expected `<id> <digest>`".into()))?;
            let id: u64 = id.parse().map_err(|e| bad(format!("bad id: {e}")))?;
            let digest = Digest::from_hex(hex.trim()).map_err(|e| bad(e.to_string()))?;
            let c = by_id.get(&id).ok_or(BenchError::MissingBatch(id))?;
            dict.insert(id, digest, c);
        }
        Ok(dict)
    }
}

/// Writes the two dictionary files for `(id, digest, compressed)` triples.
pub fn write_dictionary<'a>(
    hashes: &Path,
    compressed: &Path,
    batches: impl IntoIterator<Item = (Digest, &'a CompressedBatch)>,
) -> Result<(), BenchError> {
    let mut h = BufWriter::new(fs::File::create(hashes)?);
    let mut c = BufWriter::new(fs::File::create(compressed)?);
    for (digest, batch) in batches {
        writeln!(h, "{} {}", batch.id, digest.to_hex())?;
        c.write_all(&batch.encode())?;
    }
    h.flush()?;
    c.flush()?;
    Ok(())
}

/// Single-threaded server: one connection at a time, one request at a time.
pub struct TranslateServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TranslateServer {
    /// Binds an ephemeral localhost port and starts serving.
    pub fn spawn(dict: Dictionary) -> Result<Self, BenchError> {
        let listener = TcpListener::bind(("127.0.0.1", 0))?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    // A client that disconnects mid-request only ends its session.
                    let _ = serve(&dict, stream);
                }
            }
        });
        Ok(TranslateServer {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for TranslateServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wakes the accept loop so it observes the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(dict: &Dictionary, stream: TcpStream) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut input = BufReader::new(stream.try_clone()?);
    let mut output = BufWriter::with_capacity(1 << 16, stream);
    let mut req = [0u8; REQUEST_LEN];
    loop {
        match input.read_exact(&mut req) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        }
        let id = u64::from_be_bytes(req[..8].try_into().expect("8 bytes"));
        let digest = Digest::from_slice(&req[8..]).expect("32 bytes");
        match dict.get(id, &digest) {
            Some(container) => {
                output.write_all(&[FOUND])?;
                output.write_all(container)?;
            }
            None => {
                output.write_all(&[NOT_FOUND])?;
                output.write_all(&req)?;
            }
        }
        output.flush()?;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reply {
    Found(CompressedBatch),
    NotFound { id: u64, digest: Digest },
}

/// Sequential request/reply client.
pub struct TranslateClient {
    input: BufReader<TcpStream>,
    output: TcpStream,
    buf: Vec<u8>,
}

impl TranslateClient {
    pub fn connect(addr: SocketAddr) -> Result<Self, BenchError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TranslateClient {
            input: BufReader::with_capacity(1 << 16, stream.try_clone()?),
            output: stream,
            buf: Vec::new(),
        })
    }

    fn request(&mut self, id: u64, digest: &Digest) -> Result<u8, BenchError> {
        let mut req = [0u8; REQUEST_LEN];
        req[..8].copy_from_slice(&id.to_be_bytes());
        req[8..].copy_from_slice(digest.as_bytes());
        self.output.write_all(&req)?;
        let mut status = [0u8; 1];
        self.input.read_exact(&mut status)?;
        match status[0] {
            FOUND => {
                let mut head = [0u8; 12];
                self.input.read_exact(&mut head)?;
                let len = u32::from_be_bytes(head[8..].try_into().expect("4 bytes")) as usize;
                self.buf.clear();
                self.buf.extend_from_slice(&head);
                self.buf.resize(12 + len, 0);
                self.input.read_exact(&mut self.buf[12..])?;
            }
            NOT_FOUND => {
                self.buf.resize(REQUEST_LEN, 0);
                self.input.read_exact(&mut self.buf)?;
            }
            other => return Err(BenchError::Protocol(format!("unknown status byte {other:#04x}"))),
        }
        Ok(status[0])
    }

    pub fn translate(&mut self, id: u64, digest: &Digest) -> Result<Reply, BenchError> {
        match self.request(id, digest)? {
            FOUND => Ok(Reply::Found(CompressedBatch::decode(&self.buf)?)),
            _ => Ok(Reply::NotFound {
                id: u64::from_be_bytes(self.buf[..8].try_into().expect("8 bytes")),
                digest: Digest::from_slice(&self.buf[8..]).expect("32 bytes"),
            }),
        }
    }

    /// Like [`translate`](Self::translate) but leaves the reply in an
    /// internal buffer; returns the reply length, or `None` for NotFound.
    pub fn fetch(&mut self, id: u64, digest: &Digest) -> Result<Option<usize>, BenchError> {
        match self.request(id, digest)? {
            FOUND => Ok(Some(self.buf.len())),
            _ => Ok(None),
        }
    }
}
