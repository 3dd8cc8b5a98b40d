//! In-process message bus with a byte-accurate traffic ledger.
//!
//! Every value that crosses a party boundary is sent through [`Bus::send`] and
//! read back with [`Bus::recv`]. The bus keeps an append-only log of message
//! metadata (never payloads) which the accounting and audit code consume.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Write;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sss::{FieldElement, FIELD_BITS};
use crate::paillier::Ciphertext;

/// Table indices travel as 32-bit words.
pub const INDEX_BITS: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    Ga,
    Mo(u16),
    User(u32),
    Dealer,
}

impl PartyId {
    pub fn is_mo(&self) -> bool {
        matches!(self, PartyId::Mo(_))
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Ga => write!(f, "GA"),
            PartyId::Mo(k) => write!(f, "MO{k}"),
            PartyId::User(i) => write!(f, "U{i}"),
            PartyId::Dealer => write!(f, "DEALER"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preprocessing,
    Tracing,
    Scoring,
    UserTriggered,
    GaTriggered,
    AntiCheat,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Preprocessing,
        Phase::Tracing,
        Phase::Scoring,
        Phase::UserTriggered,
        Phase::GaTriggered,
        Phase::AntiCheat,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Preprocessing => "preprocessing",
            Phase::Tracing => "tracing",
            Phase::Scoring => "scoring",
            Phase::UserTriggered => "user_triggered",
            Phase::GaTriggered => "ga_triggered",
            Phase::AntiCheat => "anti_cheat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageClass {
    /// Correlated randomness from the offline dealer.
    DealerMaterial,
    /// One share of a party's private input, sent to its counterpart.
    InputShare,
    /// Beaver maskings `x − a`, `y − b` and comparison maskings `w + R`.
    MaskedOpening,
    /// Shares of a designated protocol output exchanged for reconstruction.
    OutputOpening,
    /// Encrypted infection status from the GA.
    StatusCiphertext,
    /// Rerandomized encrypted status forwarded between MOs after a contact.
    ForwardedStatus,
    LocQuery,
    LocReply,
    ScoreRequest,
    /// Encrypted score handed to its own user.
    ScoreCiphertext,
    /// `Enc(Score·Token)` from a user to the GA.
    MaskedScoreCiphertext,
    /// `Score·Token` returned by the GA.
    MaskedPlaintext,
    /// `(index, Enc(score))` pairs uploaded by an MO.
    ScoreUpload,
    /// Public `[lo, hi]` search window for a GA-triggered lookup.
    WindowDisclosure,
    /// GA's `(score, τ1·score + τ2)` claim in the anti-cheat flow.
    AntiCheatClaim,
    /// Never emitted by honest code; present so audits can name it.
    PlaintextStatus,
    /// Never emitted by honest code; present so audits can name it.
    PlaintextCoordinate,
}

impl MessageClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageClass::DealerMaterial => "dealer_material",
            MessageClass::InputShare => "input_share",
            MessageClass::MaskedOpening => "masked_opening",
            MessageClass::OutputOpening => "output_opening",
            MessageClass::StatusCiphertext => "status_ciphertext",
            MessageClass::ForwardedStatus => "forwarded_status",
            MessageClass::LocQuery => "loc_query",
            MessageClass::LocReply => "loc_reply",
            MessageClass::ScoreRequest => "score_request",
            MessageClass::ScoreCiphertext => "score_ciphertext",
            MessageClass::MaskedScoreCiphertext => "masked_score_ciphertext",
            MessageClass::MaskedPlaintext => "masked_plaintext",
            MessageClass::ScoreUpload => "score_upload",
            MessageClass::WindowDisclosure => "window_disclosure",
            MessageClass::AntiCheatClaim => "anti_cheat_claim",
            MessageClass::PlaintextStatus => "plaintext_status",
            MessageClass::PlaintextCoordinate => "plaintext_coordinate",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Payload {
    Empty,
    Field(Vec<FieldElement>),
    Ciphers {
        items: Vec<Ciphertext>,
        width_bits: u64,
    },
    IndexedCiphers {
        items: Vec<(u64, Ciphertext)>,
        width_bits: u64,
    },
    /// Plaintext integers charged at a fixed width each.
    Integers {
        items: Vec<BigUint>,
        width_bits: u64,
    },
    Indices(Vec<u64>),
    /// Size-only traffic (dealer material) whose content the simulation keeps elsewhere.
    Opaque { bits: u64 },
}

impl Payload {
    pub fn bits(&self) -> u64 {
        match self {
            Payload::Empty => 0,
            Payload::Field(v) => v.len() as u64 * FIELD_BITS as u64,
            Payload::Ciphers { items, width_bits } => items.len() as u64 * width_bits,
            Payload::IndexedCiphers { items, width_bits } => {
                items.len() as u64 * (width_bits + INDEX_BITS)
            }
            Payload::Integers { items, width_bits } => items.len() as u64 * width_bits,
            Payload::Indices(v) => v.len() as u64 * INDEX_BITS,
            Payload::Opaque { bits } => *bits,
        }
    }

    pub fn into_field(self) -> Result<Vec<FieldElement>> {
        match self {
            Payload::Field(v) => Ok(v),
            other => Err(Error::Protocol(format!("expected field payload, got {other:?}"))),
        }
    }

    pub fn into_ciphers(self) -> Result<Vec<Ciphertext>> {
        match self {
            Payload::Ciphers { items, .. } => Ok(items),
            other => Err(Error::Protocol(format!("expected ciphertexts, got {other:?}"))),
        }
    }

    pub fn into_indexed_ciphers(self) -> Result<Vec<(u64, Ciphertext)>> {
        match self {
            Payload::IndexedCiphers { items, .. } => Ok(items),
            other => Err(Error::Protocol(format!("expected indexed ciphertexts, got {other:?}"))),
        }
    }

    pub fn into_integers(self) -> Result<Vec<BigUint>> {
        match self {
            Payload::Integers { items, .. } => Ok(items),
            other => Err(Error::Protocol(format!("expected integers, got {other:?}"))),
        }
    }

    pub fn into_indices(self) -> Result<Vec<u64>> {
        match self {
            Payload::Indices(v) => Ok(v),
            other => Err(Error::Protocol(format!("expected indices, got {other:?}"))),
        }
    }
}

/// Identifies which sharing instance an [`MessageClass::InputShare`] belongs to,
/// so audits can check that no party other than the dealer of a secret ever
/// holds both of its evaluation points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShareTag {
    pub batch: u64,
    pub owner: PartyId,
    pub eval_point: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: u32,
    pub phase: Phase,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub class: MessageClass,
    pub payload_bits: u64,
    pub share_tag: Option<ShareTag>,
}

/// Contact-evaluation traffic charged at the analytical rate for one
/// cell-instant and one pair of operators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracingCharge {
    pub round: u32,
    pub cell: (i64, i64),
    pub mo_a: u16,
    pub mo_b: u16,
    pub pairs: u64,
    pub bits: u64,
}

struct Envelope {
    from: PartyId,
    class: MessageClass,
    payload: Payload,
}

#[derive(Default)]
pub struct Bus {
    round: u32,
    phase: Option<Phase>,
    log: Vec<LedgerEntry>,
    charges: Vec<TracingCharge>,
    mailboxes: HashMap<PartyId, VecDeque<Envelope>>,
    drop_after: Option<usize>,
    sent: usize,
    next_batch: u64,
    capture: Option<MessageClass>,
    captured: Vec<(PartyId, PartyId, Payload)>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_round(&mut self, round: u32) {
        self.round = round;
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = Some(phase);
    }

    pub fn phase(&self) -> Phase {
        self.phase.unwrap_or(Phase::Preprocessing)
    }

    /// Silently drops every message after the next `n` sends.
    pub fn inject_drop_after(&mut self, n: usize) {
        self.drop_after = Some(self.sent + n);
    }

    pub fn clear_faults(&mut self) {
        self.drop_after = None;
    }

    /// Keeps a copy of every delivered payload of `class`, for inspection in tests.
    pub fn capture(&mut self, class: MessageClass) {
        self.capture = Some(class);
    }

    pub fn captured(&self) -> &[(PartyId, PartyId, Payload)] {
        &self.captured
    }

    pub fn fresh_batch(&mut self) -> u64 {
        self.next_batch += 1;
        self.next_batch
    }

    pub fn send(
        &mut self,
        from: PartyId,
        to: PartyId,
        class: MessageClass,
        payload: Payload,
    ) -> Result<()> {
        self.send_tagged(from, to, class, payload, None)
    }

    pub fn send_tagged(
        &mut self,
        from: PartyId,
        to: PartyId,
        class: MessageClass,
        payload: Payload,
        share_tag: Option<ShareTag>,
    ) -> Result<()> {
        self.sent += 1;
        if self.drop_after.is_some_and(|limit| self.sent > limit) {
            return Ok(());
        }
        self.log.push(LedgerEntry {
            round: self.round,
            phase: self.phase(),
            sender: from,
            receiver: to,
            class,
            payload_bits: payload.bits(),
            share_tag,
        });
        if self.capture == Some(class) {
            self.captured.push((from, to, payload.clone()));
        }
        self.mailboxes.entry(to).or_default().push_back(Envelope {
            from,
            class,
            payload,
        });
        Ok(())
    }

    /// Takes the oldest pending message of `class` from `from` addressed to `to`.
    pub fn recv(&mut self, to: PartyId, from: PartyId, class: MessageClass) -> Result<Payload> {
        let queue = self.mailboxes.get_mut(&to);
        let pos = queue
            .as_ref()
            .and_then(|q| q.iter().position(|e| e.from == from && e.class == class));
        match (queue, pos) {
            (Some(q), Some(pos)) => Ok(q.remove(pos).expect("position in range").payload),
            _ => Err(Error::Timeout { from, to, class }),
        }
    }

    /// Discards undelivered messages, e.g. after an aborted round.
    pub fn drain_pending(&mut self) -> usize {
        let n = self.mailboxes.values().map(VecDeque::len).sum();
        self.mailboxes.clear();
        n
    }

    pub fn pending(&self) -> usize {
        self.mailboxes.values().map(VecDeque::len).sum()
    }

    pub fn charge_tracing(&mut self, charge: TracingCharge) {
        self.charges.push(charge);
    }

    pub fn log(&self) -> &[LedgerEntry] {
        &self.log
    }

    pub fn charges(&self) -> &[TracingCharge] {
        &self.charges
    }

    /// CSV export with columns `round,sender,receiver,message_class,payload_bits`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(["round", "sender", "receiver", "message_class", "payload_bits"])?;
        for e in &self.log {
            out.write_record([
                e.round.to_string(),
                e.sender.to_string(),
                e.receiver.to_string(),
                e.class.as_str().to_string(),
                e.payload_bits.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
