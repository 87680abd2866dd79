use chebauth_core::chebmath::Modulus;
use chebauth_core::fuzzy::{BitVector, CodeParams};
use chebauth_core::protocol::{
    auth_client_start, enroll_client, AuthChallenge, AuthConfirm, AuthRequest, AuthServer,
    ClientCredential, MemoryStore, RejectReason, ServerError, ServerPolicy, Timestamp,
};
use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

const NOW: Timestamp = 1_700_000_000_000;
const PW: &[u8] = b"correct horse";

struct World {
    rng: ChaCha20Rng,
    server: AuthServer,
    store: MemoryStore,
    b_t: BitVector,
    cred: ClientCredential,
}

fn world(seed: u64) -> World {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = Modulus::default_prime();
    let code = CodeParams::new(32, 5).unwrap();
    let server = AuthServer::new(p.clone(), code, ServerPolicy::default());
    let mut store = MemoryStore::new();
    let b_t = BitVector::random(code.n(), &mut rng);
    let (req, pending) = enroll_client(&b_t, PW, &code, &mut rng).unwrap();
    let resp = server.enroll(&req, &mut store, &mut rng).unwrap();
    let cred = pending.complete(&resp, Some(&p)).unwrap();
    World { rng, server, store, b_t, cred }
}

fn flip(bytes: &mut [u8], bit: usize) {
    let bit = bit % (bytes.len() * 8);
    bytes[bit / 8] ^= 0x80 >> (bit % 8);
}

#[derive(Debug, Clone, Copy)]
enum Field {
    O1,
    O2,
    Bb,
    M1,
    Alpha,
    T1,
    M3,
    Beta,
    T2,
    Gamma,
    T3,
}

const FIELDS: [Field; 11] = [
    Field::O1,
    Field::O2,
    Field::Bb,
    Field::M1,
    Field::Alpha,
    Field::T1,
    Field::M3,
    Field::Beta,
    Field::T2,
    Field::Gamma,
    Field::T3,
];

fn tamper_request(req: &mut AuthRequest, field: Field, bit: usize) {
    match field {
        Field::O1 => flip(&mut req.o1, bit),
        Field::O2 => flip(&mut req.o2, bit),
        Field::Bb => req.bb.flip(bit % req.bb.len()),
        Field::M1 => flip(&mut req.m1, bit),
        Field::Alpha => flip(&mut req.alpha, bit),
        Field::T1 => req.t1 ^= 1 << (bit % 64),
        _ => {}
    }
}

fn tamper_challenge(ch: &mut AuthChallenge, field: Field, bit: usize) {
    match field {
        Field::M3 => flip(&mut ch.m3, bit),
        Field::Beta => flip(&mut ch.beta, bit),
        Field::T2 => ch.t2 ^= 1 << (bit % 64),
        _ => {}
    }
}

fn tamper_confirm(c: &mut AuthConfirm, field: Field, bit: usize) {
    match field {
        Field::Gamma => flip(&mut c.gamma, bit),
        Field::T3 => c.t3 ^= 1 << (bit % 64),
        _ => {}
    }
}

/// Runs one session with an optional single-bit tamper; true if both sides
/// accepted with equal keys.
fn session(w: &mut World, noise: &[usize], tamper: Option<(Field, usize)>) -> bool {
    let code = w.cred.code();
    let mut reading = w.b_t.clone();
    for &i in noise {
        reading.flip(i);
    }
    let window = w.server.policy().window_ms;
    let (mut req, client) = auth_client_start(&w.cred, &reading, PW, NOW, window, &mut w.rng).unwrap();
    assert_eq!(req.bb.len(), code.n());
    if let Some((f, b)) = tamper {
        tamper_request(&mut req, f, b);
    }
    let m1 = req.m1;
    let Ok(mut ch) = w.server.verify_request(&req, NOW + 10, &w.store, &mut w.rng) else {
        return false;
    };
    if let Some((f, b)) = tamper {
        tamper_challenge(&mut ch, f, b);
    }
    let Ok((mut confirm, ck)) = client.finish(&ch, NOW + 20) else {
        return false;
    };
    if let Some((f, b)) = tamper {
        tamper_confirm(&mut confirm, f, b);
    }
    match w.server.finish(&m1, &confirm, NOW + 30) {
        Ok(sk) => sk == ck,
        Err(_) => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn honest_sessions_complete(seed in any::<u64>(), picks in prop::collection::vec((0usize..32, 0usize..5), 0..20)) {
        let mut w = world(seed);
        // at most two flips per block
        let mut per_block = [0usize; 32];
        let mut noise = Vec::new();
        for (block, j) in picks {
            let pos = block * 5 + j;
            if per_block[block] < 2 && !noise.contains(&pos) {
                per_block[block] += 1;
                noise.push(pos);
            }
        }
        prop_assert!(session(&mut w, &noise, None));
    }

    #[test]
    fn single_bit_tamper_rejected(seed in any::<u64>(), field in 0usize..FIELDS.len(), bit in any::<usize>()) {
        let mut w = world(seed);
        prop_assert!(!session(&mut w, &[], Some((FIELDS[field], bit))));
    }
}

#[test]
fn every_field_is_covered() {
    let mut w = world(1);
    for field in FIELDS {
        for bit in [0, 7, 100, 255] {
            assert!(!session(&mut w, &[], Some((field, bit))), "{field:?} bit {bit} accepted");
        }
    }
    assert!(session(&mut w, &[], None));
}

#[test]
fn wrong_password_changes_masked_template() {
    let mut w = world(2);
    let (req, _) = auth_client_start(&w.cred, &w.b_t, b"wrong", NOW, 30_000, &mut w.rng).unwrap();
    let err = w.server.verify_request(&req, NOW, &w.store, &mut w.rng).unwrap_err();
    assert!(matches!(err, ServerError::Rejected(RejectReason::TemplateMismatch)));
}

#[test]
fn reject_order_stale_before_lookup() {
    let mut w = world(3);
    let (mut req, _) = auth_client_start(&w.cred, &w.b_t, PW, NOW, 30_000, &mut w.rng).unwrap();
    req.o1[0] ^= 1;
    let err = w.server.verify_request(&req, NOW + 40_000, &w.store, &mut w.rng).unwrap_err();
    assert!(matches!(err, ServerError::Rejected(RejectReason::StaleTimestamp)));
    let err = w.server.verify_request(&req, NOW, &w.store, &mut w.rng).unwrap_err();
    assert!(matches!(err, ServerError::Rejected(RejectReason::UnknownCredential)));
}

#[test]
fn replayed_request_after_completion_rejected() {
    let mut w = world(4);
    let (req, client) = auth_client_start(&w.cred, &w.b_t, PW, NOW, 30_000, &mut w.rng).unwrap();
    let ch = w.server.verify_request(&req, NOW, &w.store, &mut w.rng).unwrap();
    let (confirm, _) = client.finish(&ch, NOW + 1).unwrap();
    w.server.finish(&req.m1, &confirm, NOW + 2).unwrap();
    let err = w.server.verify_request(&req, NOW + 3, &w.store, &mut w.rng).unwrap_err();
    assert!(matches!(err, ServerError::Rejected(RejectReason::DuplicateM1)));
}

#[test]
fn faithful_mode_answers_in_window_replay() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let p = Modulus::default_prime();
    let code = CodeParams::new(16, 5).unwrap();
    let policy = ServerPolicy { reject_replayed_m1: false, ..ServerPolicy::default() };
    let mut server = AuthServer::new(p.clone(), code, policy);
    let mut store = MemoryStore::new();
    let b_t = BitVector::random(code.n(), &mut rng);
    let (req, pending) = enroll_client(&b_t, PW, &code, &mut rng).unwrap();
    let cred = pending.complete(&server.enroll(&req, &mut store, &mut rng).unwrap(), None).unwrap();
    let (req, _) = auth_client_start(&cred, &b_t, PW, NOW, 30_000, &mut rng).unwrap();
    server.verify_request(&req, NOW, &store, &mut rng).unwrap();
    // the replayer gets a challenge but cannot finish without R_C
    let ch = server.verify_request(&req, NOW + 5, &store, &mut rng).unwrap();
    let forged = AuthConfirm { gamma: ch.beta, t3: NOW + 6 };
    assert_eq!(server.finish(&req.m1, &forged, NOW + 6), Err(RejectReason::ProofMismatch));
}
