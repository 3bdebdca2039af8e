// SPDX-License-Identifier: Apache-2.0

use sha2::{Digest, Sha256};

use crate::ident::Identifier;
use crate::interconnect::{BusOp, BusRequest, BusResponse, Width};

pub const HASH_SRC: u32 = 0x00;
pub const HASH_LEN: u32 = 0x04;
pub const HASH_CTRL: u32 = 0x08;
pub const HASH_STATUS: u32 = 0x0C;
pub const HASH_DIGEST: u32 = 0x20;

pub const HASH_STATUS_BUSY: u32 = 1 << 0;
pub const HASH_STATUS_ERROR: u32 = 1 << 1;
pub const HASH_STATUS_DONE: u32 = 1 << 2;

/// A read job the interconnect performs on the accelerator's behalf, tagged
/// with the identifier of whoever started it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DmaJob {
    pub src: u32,
    pub len: u32,
    pub id: Identifier,
}

/// SHA-256 engine. Writing 1 to CTRL latches a job; the interconnect then
/// streams the source range through the bus with the starter's identifier,
/// so the MPU applies to the accelerator exactly as to the core.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct HashAccel {
    src: u32,
    len: u32,
    digest: [u32; 8],
    busy: bool,
    error: bool,
    done: bool,
    job: Option<DmaJob>,
}

impl HashAccel {
    pub fn access(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        if req.width != Width::Word {
            return BusResponse::slv_err();
        }
        match (offset, req.op) {
            (HASH_SRC, BusOp::Write) => self.src = req.data,
            (HASH_LEN, BusOp::Write) => self.len = req.data,
            (HASH_SRC, BusOp::Read) => return BusResponse::okay(self.src),
            (HASH_LEN, BusOp::Read) => return BusResponse::okay(self.len),
            (HASH_CTRL, BusOp::Write) if req.data & 1 == 1 => {
                self.busy = true;
                self.done = false;
                self.error = false;
                self.job = Some(DmaJob {
                    src: self.src,
                    len: self.len,
                    id: req.id,
                });
            }
            (HASH_CTRL, BusOp::Write) => {}
            (HASH_STATUS, BusOp::Read) => {
                let mut s = 0;
                if self.busy {
                    s |= HASH_STATUS_BUSY;
                }
                if self.error {
                    s |= HASH_STATUS_ERROR;
                }
                if self.done {
                    s |= HASH_STATUS_DONE;
                }
                return BusResponse::okay(s);
            }
            (o, BusOp::Read) if (HASH_DIGEST..HASH_DIGEST + 32).contains(&o) => {
                return BusResponse::okay(self.digest[((o - HASH_DIGEST) / 4) as usize]);
            }
            _ => return BusResponse::slv_err(),
        }
        BusResponse::okay(0)
    }

    pub fn take_job(&mut self) -> Option<DmaJob> {
        self.job.take()
    }

    /// Finishes the pending job with the fetched bytes, or flags an error if
    /// any word of the range was denied.
    pub fn complete(&mut self, data: Result<Vec<u8>, ()>) {
        self.busy = false;
        match data {
            Ok(bytes) => {
                self.digest = digest_words(&bytes);
                self.done = true;
            }
            Err(()) => {
                self.digest = [0; 8];
                self.error = true;
            }
        }
    }

    pub fn digest(&self) -> [u32; 8] {
        self.digest
    }
}

/// SHA-256 as eight big-endian words, the order the digest registers expose.
pub fn digest_words(bytes: &[u8]) -> [u32; 8] {
    let d = Sha256::digest(bytes);
    let mut out = [0u32; 8];
    for (w, chunk) in out.iter_mut().zip(d.chunks_exact(4)) {
        *w = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_vectors() {
        assert_eq!(
            digest_words(b""),
            [
                0xe3b0c442, 0x98fc1c14, 0x9afbf4c8, 0x996fb924, 0x27ae41e4, 0x649b934c, 0xa495991b,
                0x7852b855
            ]
        );
        assert_eq!(
            digest_words(b"abc"),
            [
                0xba7816bf, 0x8f01cfea, 0x414140de, 0x5dae2223, 0xb00361a3, 0x96177a9c, 0xb410ff61,
                0xf20015ad
            ]
        );
    }

    #[test]
    fn start_latches_job_with_starter_id() {
        let id = Identifier::new(1, 1, 0x55);
        let mut h = HashAccel::default();
        h.access(HASH_SRC, &BusRequest::write(HASH_SRC, 0x8000_0000, id));
        h.access(HASH_LEN, &BusRequest::write(HASH_LEN, 3, id));
        h.access(HASH_CTRL, &BusRequest::write(HASH_CTRL, 1, id));
        assert_eq!(
            h.access(HASH_STATUS, &BusRequest::read(HASH_STATUS, id)).data,
            HASH_STATUS_BUSY
        );
        let job = h.take_job().unwrap();
        assert_eq!((job.src, job.len, job.id), (0x8000_0000, 3, id));
        h.complete(Ok(b"abc".to_vec()));
        assert_eq!(
            h.access(HASH_DIGEST, &BusRequest::read(HASH_DIGEST, id)).data,
            0xba7816bf
        );
        assert_eq!(
            h.access(HASH_STATUS, &BusRequest::read(HASH_STATUS, id)).data,
            HASH_STATUS_DONE
        );
        h.access(HASH_CTRL, &BusRequest::write(HASH_CTRL, 1, id));
        h.take_job();
        h.complete(Err(()));
        assert_eq!(
            h.access(HASH_STATUS, &BusRequest::read(HASH_STATUS, id)).data,
            HASH_STATUS_ERROR
        );
    }
}
