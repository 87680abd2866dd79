//! On-disk formats: the server's append-only enrollment file and the
//! client's credential file.
//!
//! Store file (big-endian):
//!
//! ```text
//! "CBA1" | version 0x01 | u16 k | u8 r | p (32)
//! record*: id (16) | bb_t (ceil(N/8)) | x_s (32) | s (32) | o1 (32)
//! ```
//!
//! Credential file:
//!
//! ```text
//! "CBC1" | version 0x01 | o1 | o2 | s | spub | p (32 each)
//! helper data: u16 k | u8 r | sketch (ceil(N/8)) | seed (32)
//! ```

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chebauth_core::chebmath::{ChebParams, Modulus, SecretDegree};
use chebauth_core::fuzzy::{BitVector, CodeParams, HelperData, KEY_BYTES};
use chebauth_core::protocol::{
    ClientCredential, Digest32, EnrollmentRecord, EnrollmentStore, ID_BYTES,
};
use num_bigint::BigUint;

pub const STORE_MAGIC: &[u8; 4] = b"CBA1";
pub const CRED_MAGIC: &[u8; 4] = b"CBC1";
pub const FORMAT_VERSION: u8 = 0x01;
pub const STORE_HEADER_BYTES: usize = 4 + 1 + 2 + 1 + 32;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("a record with this lookup digest already exists")]
    Conflict,
    #[error("corrupt record at byte offset {offset}: {detail}")]
    Integrity { offset: u64, detail: &'static str },
    #[error("bad file header: {0}")]
    BadHeader(&'static str),
    #[error("store parameters do not match the configuration")]
    ParamMismatch,
}

/// Fixed width of one encoded record.
pub fn record_len(code: &CodeParams) -> usize {
    ID_BYTES + code.n_bytes() + 32 + 32 + 32
}

pub fn encode_store_header(code: &CodeParams, p: &Modulus) -> Vec<u8> {
    let mut out = Vec::with_capacity(STORE_HEADER_BYTES);
    out.extend_from_slice(STORE_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&code.k().to_be_bytes());
    out.push(code.r());
    out.extend_from_slice(&p.to_bytes());
    out
}

pub fn decode_store_header(bytes: &[u8]) -> Result<(CodeParams, Modulus), StoreError> {
    if bytes.len() < STORE_HEADER_BYTES {
        return Err(StoreError::BadHeader("truncated"));
    }
    if &bytes[..4] != STORE_MAGIC {
        return Err(StoreError::BadHeader("magic"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(StoreError::BadHeader("version"));
    }
    let k = u16::from_be_bytes([bytes[5], bytes[6]]);
    let code = CodeParams::new(k, bytes[7]).map_err(|_| StoreError::BadHeader("code parameters"))?;
    let p = Modulus::from_be_bytes(&bytes[8..40]).map_err(|_| StoreError::BadHeader("modulus"))?;
    Ok((code, p))
}

pub fn encode_record(rec: &EnrollmentRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(ID_BYTES + rec.bb_t.as_bytes().len() + 96);
    out.extend_from_slice(&rec.id);
    out.extend_from_slice(rec.bb_t.as_bytes());
    out.extend_from_slice(&rec.x_s.to_bytes());
    out.extend_from_slice(&element_bytes(&rec.s));
    out.extend_from_slice(&rec.o1);
    out
}

/// Decodes one record and checks its invariants. `offset` only labels errors.
pub fn decode_record(
    bytes: &[u8],
    code: &CodeParams,
    p: &Modulus,
    offset: u64,
) -> Result<EnrollmentRecord, StoreError> {
    let corrupt = |detail| StoreError::Integrity { offset, detail };
    if bytes.len() != record_len(code) {
        return Err(corrupt("truncated record"));
    }
    let nb = code.n_bytes();
    let id: [u8; ID_BYTES] = bytes[..ID_BYTES].try_into().unwrap();
    let mut at = ID_BYTES;
    let bb_t = BitVector::from_bytes(&bytes[at..at + nb], code.n()).map_err(|_| corrupt("template bits"))?;
    at += nb;
    let x_s = SecretDegree::from_be_bytes(&bytes[at..at + 32]).map_err(|_| corrupt("secret degree"))?;
    at += 32;
    let s = BigUint::from_bytes_be(&bytes[at..at + 32]);
    p.check_element(&s).map_err(|_| corrupt("base element"))?;
    at += 32;
    let o1: Digest32 = bytes[at..at + 32].try_into().unwrap();
    let rec = EnrollmentRecord { id, bb_t, x_s, s, o1 };
    if !rec.is_consistent() {
        return Err(corrupt("lookup digest"));
    }
    Ok(rec)
}

fn element_bytes(x: &BigUint) -> [u8; 32] {
    chebauth_core::chebmath::element_to_bytes(x).expect("stored element fits 32 bytes")
}

#[derive(Debug, Clone)]
enum Slot {
    Record(EnrollmentRecord),
    Corrupt { offset: u64, detail: &'static str },
}

/// Append-only enrollment file with an in-memory index by `O1`.
///
/// Opening tolerates damage: complete valid records are indexed, a partial
/// trailing record is dropped on the next write, and records failing their
/// checks are reported by [`FileStore::faults`] and by `get` on their `O1`.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    file: File,
    code: CodeParams,
    p: Modulus,
    index: HashMap<Digest32, Slot>,
    valid_len: u64,
    faults: Vec<StoreError>,
}

impl FileStore {
    /// Opens an existing store or creates an empty one with the given
    /// parameters. An existing file must carry the same parameters.
    pub fn open_or_create(path: &Path, code: CodeParams, p: &Modulus) -> Result<Self, StoreError> {
        if path.exists() {
            let store = Self::open(path)?;
            if store.code != code || &store.p != p {
                return Err(StoreError::ParamMismatch);
            }
            return Ok(store);
        }
        let mut file = OpenOptions::new().read(true).write(true).create_new(true).open(path)?;
        file.write_all(&encode_store_header(&code, p))?;
        file.sync_all()?;
        Ok(FileStore {
            path: path.to_path_buf(),
            file,
            code,
            p: p.clone(),
            index: HashMap::new(),
            valid_len: STORE_HEADER_BYTES as u64,
            faults: Vec::new(),
        })
    }

    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (code, p) = decode_store_header(&bytes)?;

        let width = record_len(&code);
        let mut index = HashMap::new();
        let mut faults = Vec::new();
        let mut offset = STORE_HEADER_BYTES;
        while offset + width <= bytes.len() {
            let raw = &bytes[offset..offset + width];
            match decode_record(raw, &code, &p, offset as u64) {
                Ok(rec) => match index.entry(rec.o1) {
                    Entry::Occupied(_) => faults.push(StoreError::Integrity {
                        offset: offset as u64,
                        detail: "duplicate lookup digest",
                    }),
                    Entry::Vacant(v) => {
                        v.insert(Slot::Record(rec));
                    }
                },
                Err(StoreError::Integrity { offset, detail }) => {
                    let o1: Digest32 = raw[width - 32..].try_into().unwrap();
                    index.entry(o1).or_insert(Slot::Corrupt { offset, detail });
                    faults.push(StoreError::Integrity { offset, detail });
                }
                Err(e) => return Err(e),
            }
            offset += width;
        }
        if offset < bytes.len() {
            faults.push(StoreError::Integrity { offset: offset as u64, detail: "truncated record" });
        }
        Ok(FileStore {
            path: path.to_path_buf(),
            file,
            code,
            p,
            index,
            valid_len: offset as u64,
            faults,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn code(&self) -> CodeParams {
        self.code
    }

    pub fn modulus(&self) -> &Modulus {
        &self.p
    }

    /// Problems found while loading.
    pub fn faults(&self) -> &[StoreError] {
        &self.faults
    }

    /// Number of readable records.
    pub fn len(&self) -> usize {
        self.index.values().filter(|s| matches!(s, Slot::Record(_))).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        // Drop any partial tail so records stay aligned.
        self.file.set_len(self.valid_len)?;
        self.file.seek(SeekFrom::Start(self.valid_len))?;
        self.file.write_all(bytes)?;
        self.file.sync_data()?;
        self.valid_len += bytes.len() as u64;
        Ok(())
    }
}

impl EnrollmentStore for FileStore {
    type Error = StoreError;

    fn put(&mut self, record: EnrollmentRecord) -> Result<(), StoreError> {
        if self.index.contains_key(&record.o1) {
            return Err(StoreError::Conflict);
        }
        if record.bb_t.len() != self.code.n() {
            return Err(StoreError::ParamMismatch);
        }
        self.append(&encode_record(&record))?;
        self.index.insert(record.o1, Slot::Record(record));
        Ok(())
    }

    fn get(&self, o1: &Digest32) -> Result<Option<EnrollmentRecord>, StoreError> {
        match self.index.get(o1) {
            None => Ok(None),
            Some(Slot::Record(r)) => Ok(Some(r.clone())),
            Some(Slot::Corrupt { offset, detail }) => {
                Err(StoreError::Integrity { offset: *offset, detail })
            }
        }
    }
}

// ---- helper data and credentials ----

pub fn encode_helper_data(hd: &HelperData) -> Vec<u8> {
    let mut out = Vec::with_capacity(3 + hd.sketch.as_bytes().len() + KEY_BYTES);
    out.extend_from_slice(&hd.code.k().to_be_bytes());
    out.push(hd.code.r());
    out.extend_from_slice(hd.sketch.as_bytes());
    out.extend_from_slice(&hd.seed);
    out
}

/// Decodes helper data from the front of `bytes`, returning the rest.
pub fn decode_helper_data(bytes: &[u8]) -> Result<(HelperData, &[u8]), StoreError> {
    if bytes.len() < 3 {
        return Err(StoreError::BadHeader("helper data truncated"));
    }
    let k = u16::from_be_bytes([bytes[0], bytes[1]]);
    let code = CodeParams::new(k, bytes[2]).map_err(|_| StoreError::BadHeader("code parameters"))?;
    let nb = code.n_bytes();
    let rest = &bytes[3..];
    if rest.len() < nb + KEY_BYTES {
        return Err(StoreError::BadHeader("helper data truncated"));
    }
    let sketch = BitVector::from_bytes(&rest[..nb], code.n())
        .map_err(|_| StoreError::BadHeader("sketch bits"))?;
    let seed = rest[nb..nb + KEY_BYTES].try_into().unwrap();
    Ok((HelperData { code, sketch, seed }, &rest[nb + KEY_BYTES..]))
}

pub fn encode_credential(cred: &ClientCredential) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CRED_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&cred.o1);
    out.extend_from_slice(&cred.o2);
    out.extend_from_slice(&element_bytes(&cred.params.s));
    out.extend_from_slice(&element_bytes(&cred.params.spub));
    out.extend_from_slice(&cred.params.p.to_bytes());
    out.extend_from_slice(&encode_helper_data(&cred.hd));
    out
}

pub fn decode_credential(bytes: &[u8]) -> Result<ClientCredential, StoreError> {
    const FIXED: usize = 5 + 5 * 32;
    if bytes.len() < FIXED {
        return Err(StoreError::BadHeader("credential truncated"));
    }
    if &bytes[..4] != CRED_MAGIC {
        return Err(StoreError::BadHeader("magic"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(StoreError::BadHeader("version"));
    }
    let field = |i: usize| -> [u8; 32] { bytes[5 + 32 * i..5 + 32 * (i + 1)].try_into().unwrap() };
    let p = Modulus::from_be_bytes(&field(4)).map_err(|_| StoreError::BadHeader("modulus"))?;
    let params = ChebParams::new(
        p,
        BigUint::from_bytes_be(&field(2)),
        BigUint::from_bytes_be(&field(3)),
    )
    .map_err(|_| StoreError::BadHeader("field element out of range"))?;
    let (hd, rest) = decode_helper_data(&bytes[FIXED..])?;
    if !rest.is_empty() {
        return Err(StoreError::BadHeader("trailing bytes"));
    }
    Ok(ClientCredential { o1: field(0), o2: field(1), params, hd })
}

pub fn save_credential(path: &Path, cred: &ClientCredential) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(&encode_credential(cred))?;
    f.sync_all()
}

pub fn load_credential(path: &Path) -> Result<ClientCredential, StoreError> {
    decode_credential(&std::fs::read(path)?)
}
