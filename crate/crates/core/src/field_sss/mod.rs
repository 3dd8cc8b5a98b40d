//! Prime-field arithmetic, (2,2) Shamir sharing and dealer-assisted
//! multiplication, equality and comparison.

mod dealer;
mod field;
mod session;
mod sharing;

pub use dealer::{BeaverTriple, Dealer, Preprocessing, RandomBitShares};
pub use field::{FieldElement, FIELD_BITS, MODULUS, SHARE_BITS};
pub use session::{Session, COMP_BITS, COMP_TRIPLES, EQ_TRIPLES};
pub use sharing::{
    add_const, add_local, reconstruct, scalar_mul_local, share, share_with_blinding, Party, Share,
    SharedValue,
};
