use std::io::{self, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use num_complex::Complex64;
use thiserror::Error;

use super::frame::{decode_frame, encode_frame, frame_len, Frame, FrameError, FrameKind, HEADER_LEN};
use crate::device::{BypassCause, InjectionCommand, InjectionMode, ModeState, Polarity};
use crate::phasor::Phasor;
use crate::time::SimTime;

pub const DEFAULT_TIMEOUT_MS: u64 = 1000;
pub const PHASES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("frame rejected: {0}")]
    Frame(#[from] FrameError),
    #[error("transport error: {0}")]
    Io(String),
    #[error("no reply within {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },
    #[error("peer closed the session")]
    Closed,
    #[error("peer reported a fault (code {0})")]
    RemoteFault(f64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("link is {0:?}, not running")]
    NotRunning(LinkPhase),
}

impl From<io::Error> for LinkError {
    fn from(e: io::Error) -> Self {
        LinkError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkPhase {
    Handshaking,
    Running,
    Closed,
    Faulted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkState {
    pub session_id: u32,
    pub last_seq_sent: u32,
    pub last_seq_received: u32,
    pub timeout_ms: u64,
    pub phase: LinkPhase,
}

/// Per-step inputs for the three remote devices.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRequest {
    pub currents: [Phasor; PHASES],
    pub backup_lor: [bool; PHASES],
    pub ipb: [bool; PHASES],
    pub command: InjectionCommand,
    pub oc_enabled: bool,
    pub lor_enabled: bool,
}

const FLAG_OC: f64 = 1.0;
const FLAG_LOR: f64 = 2.0;

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl SampleRequest {
    /// Channels 0-2 currents; 3-5 (backup_lor, ipb); 6 (mode code, set-point);
    /// 7 (feature bits, 0).
    pub fn to_channels(&self) -> Vec<Complex64> {
        let mut ch: Vec<Complex64> = self.currents.to_vec();
        for k in 0..PHASES {
            ch.push(Complex64::new(bit(self.backup_lor[k]), bit(self.ipb[k])));
        }
        let (code, set) = match (self.command.mode, self.command.polarity) {
            (InjectionMode::Off, _) => (0.0, 0.0),
            (InjectionMode::FixedReactance, _) => (1.0, self.command.x_set_ohm),
            (InjectionMode::FixedVoltage, Polarity::Inductive) => (2.0, self.command.v_set_kv),
            (InjectionMode::FixedVoltage, Polarity::Capacitive) => (3.0, self.command.v_set_kv),
        };
        ch.push(Complex64::new(code, set));
        ch.push(Complex64::new(
            bit(self.oc_enabled) * FLAG_OC + bit(self.lor_enabled) * FLAG_LOR,
            0.0,
        ));
        ch
    }

    pub fn from_channels(ch: &[Complex64]) -> Result<Self, LinkError> {
        if ch.len() != 2 * PHASES + 2 {
            return Err(LinkError::Protocol(format!("sample request has {} channels", ch.len())));
        }
        let flag = |x: f64| x != 0.0;
        let command = match ch[6].re as i64 {
            0 => InjectionCommand::off(),
            1 => InjectionCommand::fixed_reactance(ch[6].im),
            2 => InjectionCommand::fixed_voltage(ch[6].im, Polarity::Inductive),
            3 => InjectionCommand::fixed_voltage(ch[6].im, Polarity::Capacitive),
            other => return Err(LinkError::Protocol(format!("unknown mode code {other}"))),
        };
        let bits = ch[7].re as u32;
        Ok(SampleRequest {
            currents: [ch[0], ch[1], ch[2]],
            backup_lor: [0, 1, 2].map(|k| flag(ch[3 + k].re)),
            ipb: [0, 1, 2].map(|k| flag(ch[3 + k].im)),
            command,
            oc_enabled: bits & 1 != 0,
            lor_enabled: bits & 2 != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceReply {
    pub injection: Phasor,
    pub mode: ModeState,
    pub vsl_closed: bool,
    pub cause: BypassCause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandReply {
    pub devices: [DeviceReply; PHASES],
}

const FLAG_VSL: u32 = 1;
const FLAG_INTERPHASE: u32 = 2;

impl CommandReply {
    /// Channels 0-2 injections; 3-5 (state code, vsl | interphase bits).
    pub fn to_channels(&self) -> Vec<Complex64> {
        let mut ch: Vec<Complex64> = self.devices.iter().map(|d| d.injection).collect();
        for d in &self.devices {
            let mut flags = 0;
            if d.vsl_closed {
                flags |= FLAG_VSL;
            }
            if d.cause == BypassCause::Interphase {
                flags |= FLAG_INTERPHASE;
            }
            ch.push(Complex64::new(d.mode.code() as f64, flags as f64));
        }
        ch
    }

    pub fn from_channels(ch: &[Complex64]) -> Result<Self, LinkError> {
        if ch.len() != 2 * PHASES {
            return Err(LinkError::Protocol(format!("command reply has {} channels", ch.len())));
        }
        let mut devices = [DeviceReply {
            injection: Phasor::new(0.0, 0.0),
            mode: ModeState::Monitoring,
            vsl_closed: true,
            cause: BypassCause::Own,
        }; PHASES];
        for k in 0..PHASES {
            let code = ch[PHASES + k].re;
            let mode = ModeState::from_code(code as u8)
                .filter(|_| code >= 0.0 && code.fract() == 0.0)
                .ok_or_else(|| LinkError::Protocol(format!("unknown state code {code}")))?;
            let flags = ch[PHASES + k].im as u32;
            devices[k] = DeviceReply {
                injection: ch[k],
                mode,
                vsl_closed: flags & FLAG_VSL != 0,
                cause: if flags & FLAG_INTERPHASE != 0 {
                    BypassCause::Interphase
                } else {
                    BypassCause::Own
                },
            };
        }
        Ok(CommandReply { devices })
    }
}

/// Reads one frame. `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, LinkError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(LinkError::Io("stream ended inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = frame_len(&header)?;
    let mut buf = vec![0u8; len];
    buf[..HEADER_LEN].copy_from_slice(&header);
    r.read_exact(&mut buf[HEADER_LEN..])?;
    Ok(Some(decode_frame(&buf)?))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), LinkError> {
    w.write_all(&encode_frame(frame))?;
    w.flush()?;
    Ok(())
}

/// Anything that can step the remote devices of one deployment.
pub trait DeviceLink: Send {
    fn exchange(&mut self, t: SimTime, request: &SampleRequest) -> Result<CommandReply, LinkError>;
    /// Sends `Bye` if the session is still running.
    fn close(&mut self);
    fn state(&self) -> &LinkState;
}

static SESSIONS: AtomicU32 = AtomicU32::new(1);

/// Simulator side of the hard lock-step link. A reader thread feeds decoded
/// frames through a channel so that replies can be awaited with a timeout.
pub struct LockstepLink<W: Write + Send> {
    writer: W,
    rx: Receiver<Result<Frame, LinkError>>,
    state: LinkState,
    reader: Option<JoinHandle<()>>,
    child: Option<Child>,
}

impl<W: Write + Send> LockstepLink<W> {
    /// Starts the reader and performs the `Hello` exchange.
    pub fn connect<R: Read + Send + 'static>(reader: R, writer: W, timeout_ms: u64) -> Result<Self, LinkError> {
        let (tx, rx) = mpsc::channel();
        let handle = std::thread::spawn(move || {
            let mut reader = reader;
            loop {
                match read_frame(&mut reader) {
                    Ok(Some(f)) => {
                        if tx.send(Ok(f)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => {
                        let _ = tx.send(Err(LinkError::Closed));
                        break;
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut link = LockstepLink {
            writer,
            rx,
            state: LinkState {
                session_id: SESSIONS.fetch_add(1, Ordering::Relaxed),
                last_seq_sent: 0,
                last_seq_received: 0,
                timeout_ms,
                phase: LinkPhase::Handshaking,
            },
            reader: Some(handle),
            child: None,
        };
        let hello = Frame::new(
            FrameKind::Hello,
            0,
            0,
            vec![Complex64::new(PHASES as f64, link.state.session_id as f64)],
        );
        link.send(&hello)?;
        let reply = link.await_frame()?;
        match reply.kind {
            FrameKind::Hello if reply.channels.first().map(|c| c.re) == Some(PHASES as f64) => {
                link.state.phase = LinkPhase::Running;
                Ok(link)
            }
            FrameKind::Hello => link.fail(LinkError::Protocol("peer serves a different channel count".into())),
            other => link.fail(LinkError::Protocol(format!("expected Hello, got {other:?}"))),
        }
    }

    fn fail<T>(&mut self, e: LinkError) -> Result<T, LinkError> {
        self.state.phase = match e {
            LinkError::Closed => LinkPhase::Closed,
            _ => LinkPhase::Faulted,
        };
        Err(e)
    }

    fn send(&mut self, f: &Frame) -> Result<(), LinkError> {
        match write_frame(&mut self.writer, f) {
            Ok(()) => Ok(()),
            Err(e) => self.fail(e),
        }
    }

    fn await_frame(&mut self) -> Result<Frame, LinkError> {
        match self.rx.recv_timeout(Duration::from_millis(self.state.timeout_ms)) {
            Ok(Ok(f)) => Ok(f),
            Ok(Err(e)) => self.fail(e),
            Err(RecvTimeoutError::Timeout) => self.fail(LinkError::Timeout {
                timeout_ms: self.state.timeout_ms,
            }),
            Err(RecvTimeoutError::Disconnected) => self.fail(LinkError::Closed),
        }
    }
}

impl<W: Write + Send> DeviceLink for LockstepLink<W> {
    fn exchange(&mut self, t: SimTime, request: &SampleRequest) -> Result<CommandReply, LinkError> {
        if self.state.phase != LinkPhase::Running {
            return Err(LinkError::NotRunning(self.state.phase));
        }
        let seq = self.state.last_seq_sent.wrapping_add(1);
        self.send(&Frame::new(FrameKind::SampleRequest, seq, t.as_nanos(), request.to_channels()))?;
        self.state.last_seq_sent = seq;
        let reply = self.await_frame()?;
        match reply.kind {
            FrameKind::CommandReply => {}
            FrameKind::Bye => return self.fail(LinkError::Closed),
            FrameKind::Fault => {
                let code = reply.channels.first().map(|c| c.re).unwrap_or(0.0);
                return self.fail(LinkError::RemoteFault(code));
            }
            other => return self.fail(LinkError::Protocol(format!("unexpected {other:?} frame"))),
        }
        if reply.seq != seq {
            return self.fail(LinkError::Protocol(format!("reply seq {} for request {seq}", reply.seq)));
        }
        self.state.last_seq_received = reply.seq;
        match CommandReply::from_channels(&reply.channels) {
            Ok(r) => Ok(r),
            Err(e) => self.fail(e),
        }
    }

    fn close(&mut self) {
        if self.state.phase == LinkPhase::Running {
            let seq = self.state.last_seq_sent.wrapping_add(1);
            let _ = write_frame(&mut self.writer, &Frame::new(FrameKind::Bye, seq, 0, vec![]));
            self.state.last_seq_sent = seq;
            self.state.phase = LinkPhase::Closed;
        }
    }

    fn state(&self) -> &LinkState {
        &self.state
    }
}

impl<W: Write + Send> Drop for LockstepLink<W> {
    fn drop(&mut self) {
        self.close();
        if let Some(mut child) = self.child.take() {
            if self.state.phase == LinkPhase::Faulted {
                let _ = child.kill();
            }
            let _ = child.wait();
        }
        // the reader exits once the peer closes its end
        if let Some(h) = self.reader.take() {
            if h.is_finished() {
                let _ = h.join();
            }
        }
    }
}

/// Launches `<exe> controller --spec <spec> --deployment <id>` and connects
/// to it over its standard streams.
pub fn spawn_controller(
    exe: &std::path::Path,
    spec_path: &std::path::Path,
    deployment: &str,
    timeout_ms: u64,
) -> Result<LockstepLink<ChildStdin>, LinkError> {
    let mut child = Command::new(exe)
        .arg("controller")
        .arg("--spec")
        .arg(spec_path)
        .arg("--deployment")
        .arg(deployment)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    let stdin = child.stdin.take().ok_or_else(|| LinkError::Io("no stdin".into()))?;
    let stdout = child.stdout.take().ok_or_else(|| LinkError::Io("no stdout".into()))?;
    match LockstepLink::connect(stdout, stdin, timeout_ms) {
        Ok(mut link) => {
            link.child = Some(child);
            Ok(link)
        }
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            Err(e)
        }
    }
}
