//! Biometric remote authentication with Chebyshev-polynomial key agreement.
//!
//! * [`chebmath`]: `T_n(x) mod p`, the semigroup trapdoor and server keys.
//! * [`fuzzy`]: code-offset secure sketch and fuzzy extractor over bit vectors.
//! * [`protocol`]: enrollment and three-message mutual authentication for
//!   both parties, ending in a shared session key.
//!
//! The crate is `no_std` and needs only `alloc`. Randomness is supplied by
//! the caller through `rand_core`, time as Unix milliseconds.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod chebmath;
pub mod fuzzy;
pub mod protocol;

pub use chebmath::{cheb_eval, cheb_eval_naive, cheb_table_naive, server_keygen, ChebParams, Modulus, ParamError, SecretDegree};
pub use fuzzy::{fe_gen, fe_rep, mask_expand, ss_recover, ss_sketch, BioKey, BitVector, CodeParams, FuzzyError, HelperData};
pub use protocol::{
    auth_client_start, enroll_client, AuthServer, ClientCredential, EnrollmentRecord, EnrollmentStore,
    RejectReason, ServerPolicy, SessionKey,
};
