use num_complex::Complex64;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CSL1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
pub const CRC_LEN: usize = 4;
/// Upper bound on channels per frame; guards allocations against garbage input.
pub const MAX_CHANNELS: u16 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    SampleRequest = 1,
    CommandReply = 2,
    Hello = 3,
    Bye = 4,
    Fault = 5,
}

impl FrameKind {
    pub fn from_u8(b: u8) -> Option<FrameKind> {
        Some(match b {
            1 => FrameKind::SampleRequest,
            2 => FrameKind::CommandReply,
            3 => FrameKind::Hello,
            4 => FrameKind::Bye,
            5 => FrameKind::Fault,
            _ => return None,
        })
    }
}

/// One message on the lock-step link.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub seq: u32,
    pub t_ns: u64,
    pub channels: Vec<Complex64>,
}

impl Frame {
    pub fn new(kind: FrameKind, seq: u32, t_ns: u64, channels: Vec<Complex64>) -> Self {
        Frame {
            kind,
            seq,
            t_ns,
            channels,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 16 * self.channels.len() + CRC_LEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("length: frame needs {needed} bytes, got {got}")]
    Length { needed: usize, got: usize },
    #[error("magic: expected \"CSL1\", got {0:02x?}")]
    Magic([u8; 4]),
    #[error("version: unsupported protocol version {0}")]
    Version(u8),
    #[error("kind: unknown frame kind {0}")]
    Kind(u8),
    #[error("n_channels: {0} exceeds the limit")]
    Channels(u16),
    #[error("crc32: expected {expected:08x}, computed {computed:08x}")]
    Crc { expected: u32, computed: u32 },
}

impl FrameError {
    /// Name of the header field that failed to validate.
    pub fn field(&self) -> &'static str {
        match self {
            FrameError::Length { .. } => "length",
            FrameError::Magic(_) => "magic",
            FrameError::Version(_) => "version",
            FrameError::Kind(_) => "kind",
            FrameError::Channels(_) => "n_channels",
            FrameError::Crc { .. } => "crc32",
        }
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    encode_with_version(frame, VERSION)
}

pub(crate) fn encode_with_version(frame: &Frame, version: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(version);
    out.push(frame.kind as u8);
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.extend_from_slice(&frame.t_ns.to_le_bytes());
    out.extend_from_slice(&(frame.channels.len() as u16).to_le_bytes());
    for c in &frame.channels {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Validates the fixed header and returns the full frame length it announces.
pub fn frame_len(header: &[u8]) -> Result<usize, FrameError> {
    if header.len() < HEADER_LEN {
        return Err(FrameError::Length {
            needed: HEADER_LEN,
            got: header.len(),
        });
    }
    let magic: [u8; 4] = header[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(FrameError::Magic(magic));
    }
    if header[4] != VERSION {
        return Err(FrameError::Version(header[4]));
    }
    if FrameKind::from_u8(header[5]).is_none() {
        return Err(FrameError::Kind(header[5]));
    }
    let n = u16::from_le_bytes([header[18], header[19]]);
    if n > MAX_CHANNELS {
        return Err(FrameError::Channels(n));
    }
    Ok(HEADER_LEN + 16 * n as usize + CRC_LEN)
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    let len = frame_len(bytes)?;
    if bytes.len() != len {
        return Err(FrameError::Length {
            needed: len,
            got: bytes.len(),
        });
    }
    let body = &bytes[..len - CRC_LEN];
    let expected = u32::from_le_bytes(bytes[len - CRC_LEN..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if expected != computed {
        return Err(FrameError::Crc { expected, computed });
    }
    let kind = FrameKind::from_u8(bytes[5]).expect("checked in frame_len");
    let seq = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    let t_ns = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes"));
    let channels = body[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..16].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok(Frame {
        kind,
        seq,
        t_ns,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Frame {
        Frame::new(
            FrameKind::SampleRequest,
            7,
            1_000_250_000,
            vec![Complex64::new(0.5, -0.25), Complex64::new(-1.0e-3, 3.0)],
        )
    }

    #[test]
    fn layout_is_little_endian() {
        let b = encode_frame(&sample());
        assert_eq!(&b[0..4], b"CSL1");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 1);
        assert_eq!(&b[6..10], &7u32.to_le_bytes());
        assert_eq!(&b[10..18], &1_000_250_000u64.to_le_bytes());
        assert_eq!(&b[18..20], &2u16.to_le_bytes());
        assert_eq!(&b[20..28], &0.5f64.to_le_bytes());
        assert_eq!(b.len(), 20 + 32 + 4);
    }

    #[test]
    fn round_trip() {
        let f = sample();
        assert_eq!(decode_frame(&encode_frame(&f)).unwrap(), f);
    }

    #[test]
    fn flipped_payload_byte_is_a_crc_error() {
        let mut b = encode_frame(&sample());
        b[25] ^= 0x40;
        let e = decode_frame(&b).unwrap_err();
        assert_eq!(e.field(), "crc32");
        assert!(e.to_string().contains("crc32"));
    }

    #[test]
    fn version_two_is_rejected() {
        let hello = Frame::new(FrameKind::Hello, 0, 0, vec![Complex64::new(3.0, 0.0)]);
        let b = encode_with_version(&hello, 2);
        assert_eq!(decode_frame(&b), Err(FrameError::Version(2)));
    }

    #[test]
    fn bad_magic_and_kind_and_length() {
        let mut b = encode_frame(&sample());
        b[0] = b'X';
        assert_eq!(decode_frame(&b).unwrap_err().field(), "magic");
        let mut b = encode_frame(&sample());
        b[5] = 9;
        assert_eq!(decode_frame(&b).unwrap_err().field(), "kind");
        let b = encode_frame(&sample());
        assert_eq!(decode_frame(&b[..b.len() - 1]).unwrap_err().field(), "length");
        assert_eq!(decode_frame(&b[..3]).unwrap_err().field(), "length");
    }

    #[test]
    fn random_mutations_never_panic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = encode_frame(&sample());
        for _ in 0..10_000 {
            let mut b = base.clone();
            for _ in 0..rng.random_range(1..4) {
                let k = rng.random_range(0..b.len());
                b[k] = rng.random();
            }
            if rng.random_bool(0.1) {
                b.truncate(rng.random_range(0..b.len()));
            }
            let _ = decode_frame(&b);
        }
    }

    proptest! {
        #[test]
        fn any_frame_round_trips(seq: u32, t_ns: u64, kind in 1u8..=5,
                                 ch in prop::collection::vec((any::<f64>(), any::<f64>()), 0..16)) {
            let f = Frame::new(FrameKind::from_u8(kind).unwrap(), seq, t_ns,
                               ch.into_iter().map(|(a, b)| Complex64::new(a, b)).collect());
            let d = decode_frame(&encode_frame(&f)).unwrap();
            prop_assert_eq!(encode_frame(&d), encode_frame(&f));
        }

        #[test]
        fn arbitrary_bytes_yield_typed_errors(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
            let _ = decode_frame(&bytes);
        }
    }
}
