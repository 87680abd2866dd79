//! Length-prefixed binary framing for the protocol messages.
//!
//! A frame is `u32 body length (BE) | u8 type | body`. Every body has a
//! fixed width determined by the type and the code parameters; all
//! integers are big-endian.

use std::io::{self, Read, Write};

use chebauth_core::fuzzy::{BitVector, CodeParams};
use chebauth_core::protocol::{
    AuthChallenge, AuthConfirm, AuthRequest, EnrollRequest, EnrollResponse, DIGEST_BYTES,
};

pub const HEADER_BYTES: usize = 5;

pub const TAG_ENROLL_REQUEST: u8 = 1;
pub const TAG_ENROLL_RESPONSE: u8 = 2;
pub const TAG_AUTH_REQUEST: u8 = 3;
pub const TAG_AUTH_CHALLENGE: u8 = 4;
pub const TAG_AUTH_CONFIRM: u8 = 5;
pub const TAG_FAILURE: u8 = 6;

const E: usize = 32;
const TS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("connection closed")]
    Closed,
    #[error("frame shorter than its header")]
    Short,
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("declared body length {declared}, expected {expected}")]
    LengthMismatch { declared: usize, expected: usize },
    #[error("malformed bit string in body")]
    BadBits,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    EnrollRequest(EnrollRequest),
    EnrollResponse(EnrollResponse),
    AuthRequest(AuthRequest),
    AuthChallenge(AuthChallenge),
    AuthConfirm(AuthConfirm),
    /// Uniform rejection; carries no reason.
    Failure,
}

impl WireMessage {
    pub fn tag(&self) -> u8 {
        match self {
            WireMessage::EnrollRequest(_) => TAG_ENROLL_REQUEST,
            WireMessage::EnrollResponse(_) => TAG_ENROLL_RESPONSE,
            WireMessage::AuthRequest(_) => TAG_AUTH_REQUEST,
            WireMessage::AuthChallenge(_) => TAG_AUTH_CHALLENGE,
            WireMessage::AuthConfirm(_) => TAG_AUTH_CONFIRM,
            WireMessage::Failure => TAG_FAILURE,
        }
    }

    pub fn name(&self) -> &'static str {
        tag_name(self.tag())
    }

    /// Serializes into a complete frame.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            WireMessage::EnrollRequest(m) => {
                body.extend_from_slice(m.bb_t.as_bytes());
                body.extend_from_slice(&m.tag);
            }
            WireMessage::EnrollResponse(m) => {
                for field in [&m.o1, &m.o2, &m.s, &m.spub, &m.p] {
                    body.extend_from_slice(field);
                }
            }
            WireMessage::AuthRequest(m) => {
                body.extend_from_slice(&m.o1);
                body.extend_from_slice(&m.o2);
                body.extend_from_slice(m.bb.as_bytes());
                body.extend_from_slice(&m.m1);
                body.extend_from_slice(&m.alpha);
                body.extend_from_slice(&m.t1.to_be_bytes());
            }
            WireMessage::AuthChallenge(m) => {
                body.extend_from_slice(&m.m3);
                body.extend_from_slice(&m.beta);
                body.extend_from_slice(&m.t2.to_be_bytes());
            }
            WireMessage::AuthConfirm(m) => {
                body.extend_from_slice(&m.gamma);
                body.extend_from_slice(&m.t3.to_be_bytes());
            }
            WireMessage::Failure => {}
        }
        let mut frame = Vec::with_capacity(HEADER_BYTES + body.len());
        frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
        frame.push(self.tag());
        frame.extend_from_slice(&body);
        frame
    }

    /// Parses a complete frame.
    pub fn decode(frame: &[u8], code: &CodeParams) -> Result<Self, FrameError> {
        if frame.len() < HEADER_BYTES {
            return Err(FrameError::Short);
        }
        let declared = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
        let tag = frame[4];
        let expected = body_len(tag, code)?;
        let actual = frame.len() - HEADER_BYTES;
        if declared != expected || actual != expected {
            return Err(FrameError::LengthMismatch { declared, expected });
        }
        decode_body(tag, &frame[HEADER_BYTES..], code)
    }
}

pub fn tag_name(tag: u8) -> &'static str {
    match tag {
        TAG_ENROLL_REQUEST => "EnrollRequest",
        TAG_ENROLL_RESPONSE => "EnrollResponse",
        TAG_AUTH_REQUEST => "AuthRequest",
        TAG_AUTH_CHALLENGE => "AuthChallenge",
        TAG_AUTH_CONFIRM => "AuthConfirm",
        TAG_FAILURE => "Failure",
        _ => "Unknown",
    }
}

/// Body width for `tag`; unknown tags are rejected here, before any body
/// bytes are looked at.
pub fn body_len(tag: u8, code: &CodeParams) -> Result<usize, FrameError> {
    let nb = code.n_bytes();
    Ok(match tag {
        TAG_ENROLL_REQUEST => nb + DIGEST_BYTES,
        TAG_ENROLL_RESPONSE => 5 * E,
        TAG_AUTH_REQUEST => 2 * DIGEST_BYTES + nb + E + DIGEST_BYTES + TS,
        TAG_AUTH_CHALLENGE => E + DIGEST_BYTES + TS,
        TAG_AUTH_CONFIRM => DIGEST_BYTES + TS,
        TAG_FAILURE => 0,
        other => return Err(FrameError::UnknownTag(other)),
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        head
    }

    fn array<const N: usize>(&mut self) -> [u8; N] {
        self.take(N).try_into().unwrap()
    }

    fn u64(&mut self) -> u64 {
        u64::from_be_bytes(self.array())
    }

    fn bits(&mut self, code: &CodeParams) -> Result<BitVector, FrameError> {
        BitVector::from_bytes(self.take(code.n_bytes()), code.n()).map_err(|_| FrameError::BadBits)
    }
}

fn decode_body(tag: u8, body: &[u8], code: &CodeParams) -> Result<WireMessage, FrameError> {
    let mut c = Cursor { buf: body };
    Ok(match tag {
        TAG_ENROLL_REQUEST => {
            let bb_t = c.bits(code)?;
            WireMessage::EnrollRequest(EnrollRequest { bb_t, tag: c.array() })
        }
        TAG_ENROLL_RESPONSE => WireMessage::EnrollResponse(EnrollResponse {
            o1: c.array(),
            o2: c.array(),
            s: c.array(),
            spub: c.array(),
            p: c.array(),
        }),
        TAG_AUTH_REQUEST => {
            let o1 = c.array();
            let o2 = c.array();
            let bb = c.bits(code)?;
            WireMessage::AuthRequest(AuthRequest {
                o1,
                o2,
                bb,
                m1: c.array(),
                alpha: c.array(),
                t1: c.u64(),
            })
        }
        TAG_AUTH_CHALLENGE => WireMessage::AuthChallenge(AuthChallenge {
            m3: c.array(),
            beta: c.array(),
            t2: c.u64(),
        }),
        TAG_AUTH_CONFIRM => WireMessage::AuthConfirm(AuthConfirm { gamma: c.array(), t3: c.u64() }),
        TAG_FAILURE => WireMessage::Failure,
        other => return Err(FrameError::UnknownTag(other)),
    })
}

/// Reads one frame. A clean end of stream before any header byte is
/// reported as [`FrameError::Closed`].
pub fn read_frame<R: Read>(r: &mut R, code: &CodeParams) -> Result<WireMessage, FrameError> {
    let mut header = [0u8; HEADER_BYTES];
    let mut filled = 0;
    while filled < HEADER_BYTES {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(FrameError::Short),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let declared = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
    let expected = body_len(header[4], code)?;
    if declared != expected {
        return Err(FrameError::LengthMismatch { declared, expected });
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_BYTES + declared, 0);
    r.read_exact(&mut frame[HEADER_BYTES..]).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Short,
        _ => FrameError::Io(e),
    })?;
    WireMessage::decode(&frame, code)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &WireMessage) -> io::Result<()> {
    w.write_all(&msg.encode())?;
    w.flush()
}
