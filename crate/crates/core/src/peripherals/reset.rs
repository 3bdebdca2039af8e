// SPDX-License-Identifier: Apache-2.0

use crate::interconnect::{BusOp, BusRequest, BusResponse, Width};

/// Register offset of the line for core `c` is `4 * c`.
pub const RESET_LINE_REE: u32 = 0x0;
pub const RESET_LINE_RVSCP: u32 = 0x4;

/// Reset lines of both cores. Bit 0 of a line register is 1 while the
/// core is held in reset.
///
/// With `notice_ticks` set, asserting a line that is currently released
/// first posts a notice for that core and only takes effect after the delay.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResetUnit {
    lines: [bool; 2],
    notice_ticks: Option<u32>,
    pending: [Option<u32>; 2],
    notices: Vec<u8>,
}

impl ResetUnit {
    pub fn new(initial: [bool; 2], notice_ticks: Option<u32>) -> Self {
        Self {
            lines: initial,
            notice_ticks,
            pending: [None; 2],
            notices: Vec::new(),
        }
    }

    pub fn asserted(&self, core: u8) -> bool {
        self.lines[core as usize]
    }

    pub fn lines(&self) -> [bool; 2] {
        self.lines
    }

    /// Direct line control, used for initial conditions and by tests.
    pub fn set(&mut self, core: u8, asserted: bool) {
        self.lines[core as usize] = asserted;
        self.pending[core as usize] = None;
    }

    pub fn access(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        if req.width != Width::Word || !matches!(offset, RESET_LINE_REE | RESET_LINE_RVSCP) {
            return BusResponse::slv_err();
        }
        let core = (offset / 4) as usize;
        match req.op {
            BusOp::Read => BusResponse::okay(self.lines[core] as u32),
            BusOp::Write => {
                let assert = req.data & 1 == 1;
                match (assert, self.notice_ticks) {
                    (true, Some(delay)) if !self.lines[core] => {
                        if self.pending[core].is_none() {
                            self.pending[core] = Some(delay);
                            self.notices.push(core as u8);
                        }
                    }
                    _ => self.set(core as u8, assert),
                }
                BusResponse::okay(0)
            }
        }
    }

    /// Advances pending delayed assertions by one tick.
    pub fn tick(&mut self) {
        for core in 0..2 {
            if let Some(left) = self.pending[core] {
                if left <= 1 {
                    self.set(core as u8, true);
                } else {
                    self.pending[core] = Some(left - 1);
                }
            }
        }
    }

    /// Cores that should be told about an upcoming reset.
    pub fn take_notices(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.notices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::Identifier;

    const ID: Identifier = Identifier::new(1, 1, 0);

    #[test]
    fn immediate_lines() {
        let mut r = ResetUnit::new([true, false], None);
        r.access(RESET_LINE_REE, &BusRequest::write(RESET_LINE_REE, 0, ID));
        assert!(!r.asserted(0));
        r.access(RESET_LINE_RVSCP, &BusRequest::write(RESET_LINE_RVSCP, 1, ID));
        assert!(r.asserted(1));
        assert_eq!(
            r.access(RESET_LINE_RVSCP, &BusRequest::read(RESET_LINE_RVSCP, ID))
                .data,
            1
        );
        assert!(!r.access(0x8, &BusRequest::read(0x8, ID)).is_okay());
    }

    #[test]
    fn notified_assertion_is_delayed() {
        let mut r = ResetUnit::new([false, false], Some(3));
        r.access(RESET_LINE_RVSCP, &BusRequest::write(RESET_LINE_RVSCP, 1, ID));
        assert_eq!(r.take_notices(), vec![1]);
        assert!(!r.asserted(1));
        r.tick();
        r.tick();
        assert!(!r.asserted(1));
        r.tick();
        assert!(r.asserted(1));
    }
}
