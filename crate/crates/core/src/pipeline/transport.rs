//! Byte transports: stdin/stdout, TCP, files or device nodes, an in-process
//! emulator, and a bounded in-memory pipe.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::thread;

use crate::emulator::{run_emulator, Emulator, EmulatorConfig, Pacing};
use crate::error::{Error, Result};
use crate::protocol::{parse_pwm_command, PwmCommand};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportSpec {
    /// stdin for readers, stdout for writers
    Pipe,
    /// Listen on `PORT` (emulator side) or connect to `HOST:PORT` (host side).
    Tcp { host: String, port: u16 },
    /// A regular file or a device node such as `/dev/ttyACM0`.
    File(PathBuf),
    /// An in-process emulator driven by the config file at this path.
    Emulator(PathBuf),
}

impl FromStr for TransportSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "pipe" {
            return Ok(TransportSpec::Pipe);
        }
        if let Some(rest) = s.strip_prefix("tcp:") {
            let (host, port) = match rest.rsplit_once(':') {
                Some((h, p)) => (h.to_string(), p),
                None => ("127.0.0.1".to_string(), rest),
            };
            let port = port
                .parse()
                .map_err(|_| Error::invalid(format!("bad TCP port in {s:?}")))?;
            return Ok(TransportSpec::Tcp { host, port });
        }
        if let Some(path) = s.strip_prefix("file:").filter(|p| !p.is_empty()) {
            return Ok(TransportSpec::File(path.into()));
        }
        if let Some(path) = s.strip_prefix("emu:").filter(|p| !p.is_empty()) {
            return Ok(TransportSpec::Emulator(path.into()));
        }
        Err(Error::invalid(format!(
            "unknown transport {s:?} (expected pipe, tcp:PORT, file:PATH or emu:CONFIG)"
        )))
    }
}

/// Bounded in-memory byte pipe. Writes block once `capacity` chunks are
/// queued; the reader sees EOF after the writer is dropped, and writes fail
/// with `BrokenPipe` after the reader is dropped.
pub fn pipe(capacity: usize) -> (PipeWriter, PipeReader) {
    let (tx, rx) = mpsc::sync_channel(capacity);
    (
        PipeWriter { tx },
        PipeReader {
            rx,
            chunk: Vec::new(),
            pos: 0,
        },
    )
}

pub struct PipeWriter {
    tx: SyncSender<Vec<u8>>,
}

impl Write for PipeWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub struct PipeReader {
    rx: Receiver<Vec<u8>>,
    chunk: Vec<u8>,
    pos: usize,
}

impl Read for PipeReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        while self.pos >= self.chunk.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.chunk = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.chunk.len() - self.pos);
        buf[..n].copy_from_slice(&self.chunk[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Batches frames into larger chunks before they hit the pipe.
struct Batched<W: Write> {
    inner: W,
    buf: Vec<u8>,
}

impl<W: Write> Write for Batched<W> {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        if self.buf.len() >= 4096 {
            self.inner.write_all(&self.buf)?;
            self.buf.clear();
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        if !self.buf.is_empty() {
            self.inner.write_all(&self.buf)?;
            self.buf.clear();
        }
        self.inner.flush()
    }
}

/// Starts a fast-mode emulator on its own thread and returns the read end of
/// its stream.
pub fn spawn_emulator(config: EmulatorConfig, duration: f64) -> Result<PipeReader> {
    let mut emu = Emulator::new(config)?;
    let (writer, reader) = pipe(64);
    thread::spawn(move || {
        let mut sink = Batched {
            inner: writer,
            buf: Vec::with_capacity(8192),
        };
        // A dropped reader shows up as `closed_early`; nothing else to report.
        let _ = run_emulator(&mut emu, duration, Pacing::Fast, &mut sink, None);
    });
    Ok(reader)
}

/// Opens the host (reading) side of a transport.
///
/// `emulator_seed` replaces the seed of an `emu:` config when given;
/// `duration` bounds an in-process emulator run.
pub fn open_reader(
    spec: &TransportSpec,
    duration: f64,
    emulator_seed: Option<u64>,
) -> Result<Box<dyn Read + Send>> {
    let reader: Box<dyn Read + Send> = match spec {
        TransportSpec::Pipe => Box::new(io::stdin()),
        TransportSpec::Tcp { host, port } => Box::new(
            TcpStream::connect((host.as_str(), *port))
                .map_err(|e| Error::Transport(format!("connect {host}:{port}: {e}")))?,
        ),
        TransportSpec::File(path) => Box::new(
            File::open(path)
                .map_err(|e| Error::Transport(format!("open {}: {e}", path.display())))?,
        ),
        TransportSpec::Emulator(path) => {
            let mut config = load_emulator_config(path)?;
            if let Some(seed) = emulator_seed {
                config.seed = seed;
            }
            Box::new(spawn_emulator(config, duration)?)
        }
    };
    Ok(reader)
}

/// Opens the host side for sending force-feedback commands.
pub fn open_command_writer(spec: &TransportSpec) -> Result<Box<dyn Write + Send>> {
    let writer: Box<dyn Write + Send> = match spec {
        TransportSpec::Pipe => Box::new(io::stdout()),
        TransportSpec::Tcp { host, port } => Box::new(
            TcpStream::connect((host.as_str(), *port))
                .map_err(|e| Error::Transport(format!("connect {host}:{port}: {e}")))?,
        ),
        TransportSpec::File(path) => Box::new(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::Transport(format!("open {}: {e}", path.display())))?,
        ),
        TransportSpec::Emulator(_) => {
            return Err(Error::invalid(
                "emu: transports only produce sensor streams",
            ))
        }
    };
    Ok(writer)
}

pub fn load_emulator_config(path: &std::path::Path) -> Result<EmulatorConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).in_file(path.display().to_string()))?;
    EmulatorConfig::parse(&text).map_err(|e| e.in_file(path.display().to_string()))
}

/// Reads `P ...` lines until EOF and forwards the valid ones.
///
/// Malformed lines are reported through `on_error` and skipped.
pub fn forward_pwm_lines<R: Read>(
    reader: R,
    tx: mpsc::Sender<PwmCommand>,
    mut on_error: impl FnMut(Error),
) {
    for line in BufReader::new(reader).lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        match parse_pwm_command(&line) {
            Ok(cmd) => {
                if tx.send(cmd).is_err() {
                    break;
                }
            }
            Err(e) => on_error(e),
        }
    }
}

/// Device side of a TCP transport: accepts one host connection, streams
/// frames to it and feeds the PWM commands it sends back into the emulator.
pub fn serve_tcp(
    listener: TcpListener,
    emulator: &mut Emulator,
    duration: f64,
    pacing: Pacing,
) -> Result<crate::emulator::RunReport> {
    let (stream, _) = listener
        .accept()
        .map_err(|e| Error::Transport(format!("accept: {e}")))?;
    let back = stream
        .try_clone()
        .map_err(|e| Error::Transport(format!("clone socket: {e}")))?;
    let (tx, rx) = mpsc::channel();
    let forwarder = thread::spawn(move || {
        forward_pwm_lines(back, tx, |e| eprintln!("ignoring host command: {e}"));
    });
    let mut sink = io::BufWriter::new(stream);
    let report = run_emulator(emulator, duration, pacing, &mut sink, Some(&rx))?;
    if report.closed_early {
        // The host hung up; commands it sent before closing are still valid.
        let _ = forwarder.join();
    }
    while let Ok(cmd) = rx.try_recv() {
        emulator.handle_pwm(cmd);
    }
    Ok(report)
}
