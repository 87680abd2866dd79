//! Synthetic FAR/FRR evaluation.
//!
//! Genuine attempts present the enrolled template with exactly `noise`
//! bit flips in every block; impostor attempts present a fresh random
//! template against an existing credential with the right password. Each
//! attempt runs the full protocol in process on a virtual clock.

use chebauth_core::chebmath::Modulus;
use chebauth_core::fuzzy::{BitVector, CodeParams};
use chebauth_core::protocol::{
    auth_client_start, enroll_client, AuthServer, ClientCredential, MemoryStore, ServerPolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const START_MS: u64 = 1_700_000_000_000;
const MAX_USERS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub trials: usize,
    pub noise: usize,
    pub capacity: usize,
    pub users: usize,
    pub genuine_rejected: usize,
    pub impostor_accepted: usize,
}

impl EvalReport {
    pub fn far(&self) -> f64 {
        self.impostor_accepted as f64 / self.trials as f64
    }

    pub fn frr(&self) -> f64 {
        self.genuine_rejected as f64 / self.trials as f64
    }

    /// Fixed-width table followed by a machine-readable `RESULT` line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "trials={} noise={} flips/block (capacity {}) users={}\n",
            self.trials, self.noise, self.capacity, self.users
        ));
        out.push_str(&format!("{:<10}{:>14}{:>14}\n", "Group", "FAR", "FRR"));
        out.push_str(&format!(
            "{:<10}{:>14}{:>14}\n",
            "genuine",
            "X",
            format!("{}/{}", self.genuine_rejected, self.trials)
        ));
        out.push_str(&format!(
            "{:<10}{:>14}{:>14}\n",
            "impostor",
            format!("{}/{}", self.impostor_accepted, self.trials),
            "X"
        ));
        out.push_str(&format!("RESULT far={:.4} frr={:.4}\n", self.far(), self.frr()));
        out
    }
}

struct User {
    template: BitVector,
    password: Vec<u8>,
    cred: ClientCredential,
}

/// Flips exactly `flips` distinct positions inside every block.
pub fn apply_block_noise<R: Rng + ?Sized>(v: &BitVector, code: &CodeParams, flips: usize, rng: &mut R) -> BitVector {
    let r = usize::from(code.r());
    let flips = flips.min(r);
    let mut out = v.clone();
    let mut positions: Vec<usize> = (0..r).collect();
    for block in 0..usize::from(code.k()) {
        for i in 0..flips {
            let j = rng.gen_range(i..r);
            positions.swap(i, j);
            out.flip(block * r + positions[i]);
        }
    }
    out
}

fn attempt(
    server: &mut AuthServer,
    store: &MemoryStore,
    cred: &ClientCredential,
    reading: &BitVector,
    pw: &[u8],
    clock: &mut u64,
    rng: &mut ChaCha20Rng,
) -> bool {
    let window = server.policy().window_ms;
    let (req, session) = match auth_client_start(cred, reading, pw, *clock, window, rng) {
        Ok(v) => v,
        Err(_) => return false,
    };
    *clock += 1;
    let Ok(challenge) = server.verify_request(&req, *clock, store, rng) else {
        return false;
    };
    *clock += 1;
    let Ok((confirm, client_key)) = session.finish(&challenge, *clock) else {
        return false;
    };
    *clock += 1;
    match server.finish(&req.m1, &confirm, *clock) {
        Ok(server_key) => server_key == client_key,
        Err(_) => false,
    }
}

/// Runs `trials` genuine and `trials` impostor attempts. Deterministic for
/// a given seed.
pub fn run_eval(
    p: &Modulus,
    code: CodeParams,
    policy: ServerPolicy,
    trials: usize,
    noise: usize,
    seed: u64,
) -> EvalReport {
    assert!(trials >= 1, "at least one trial");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut server = AuthServer::new(p.clone(), code, policy);
    let mut store = MemoryStore::new();
    let mut clock = START_MS;

    let users: Vec<User> = (0..trials.min(MAX_USERS))
        .map(|i| {
            let template = BitVector::random(code.n(), &mut rng);
            let password = format!("user-{i}-{:08x}", rng.gen::<u32>()).into_bytes();
            let (req, pending) = enroll_client(&template, &password, &code, &mut rng).expect("valid template");
            let resp = server.enroll(&req, &mut store, &mut rng).expect("memory store");
            let cred = pending.complete(&resp, Some(p)).expect("honest response");
            User { template, password, cred }
        })
        .collect();

    let mut genuine_rejected = 0;
    for i in 0..trials {
        let u = &users[i % users.len()];
        let reading = apply_block_noise(&u.template, &code, noise, &mut rng);
        if !attempt(&mut server, &store, &u.cred, &reading, &u.password, &mut clock, &mut rng) {
            genuine_rejected += 1;
        }
    }

    let mut impostor_accepted = 0;
    for i in 0..trials {
        let u = &users[i % users.len()];
        let reading = BitVector::random(code.n(), &mut rng);
        if attempt(&mut server, &store, &u.cred, &reading, &u.password, &mut clock, &mut rng) {
            impostor_accepted += 1;
        }
    }

    EvalReport {
        trials,
        noise,
        capacity: code.t(),
        users: users.len(),
        genuine_rejected,
        impostor_accepted,
    }
}
