// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;

use crate::interconnect::{BusOp, BusRequest, BusResponse, Width};

pub const UART_DATA: u32 = 0x0;
pub const UART_STATUS: u32 = 0x4;

pub const STATUS_RX_AVAIL: u32 = 1 << 0;
pub const STATUS_TX_READY: u32 = 1 << 1;

/// Two byte FIFOs behind a data and a status register. Every byte pushed
/// into the receive FIFO raises the device interrupt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Uart {
    tx: VecDeque<u8>,
    rx: VecDeque<u8>,
    irq: bool,
}

impl Uart {
    pub fn access(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        if req.width != Width::Word && !(offset == UART_DATA && req.width == Width::Byte) {
            return BusResponse::slv_err();
        }
        match (offset, req.op) {
            (UART_DATA, BusOp::Write) => {
                self.tx.push_back(req.data as u8);
                BusResponse::okay(0)
            }
            (UART_DATA, BusOp::Read) => BusResponse::okay(self.rx.pop_front().unwrap_or(0) as u32),
            (UART_STATUS, BusOp::Read) => {
                let rx = if self.rx.is_empty() { 0 } else { STATUS_RX_AVAIL };
                BusResponse::okay(rx | STATUS_TX_READY)
            }
            _ => BusResponse::slv_err(),
        }
    }

    pub fn push_rx(&mut self, bytes: &[u8]) {
        if !bytes.is_empty() {
            self.rx.extend(bytes);
            self.irq = true;
        }
    }

    pub fn take_tx(&mut self) -> Vec<u8> {
        self.tx.drain(..).collect()
    }

    pub fn take_irq(&mut self) -> bool {
        std::mem::take(&mut self.irq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::Identifier;

    #[test]
    fn fifo_order_and_status() {
        let id = Identifier::new(0, 0, 0);
        let mut u = Uart::default();
        u.push_rx(b"ab");
        assert!(u.take_irq());
        assert!(!u.take_irq());
        let st = u.access(UART_STATUS, &BusRequest::read(UART_STATUS, id));
        assert_eq!(st.data, STATUS_RX_AVAIL | STATUS_TX_READY);
        assert_eq!(u.access(0, &BusRequest::read(0, id)).data, b'a' as u32);
        assert_eq!(u.access(0, &BusRequest::read(0, id)).data, b'b' as u32);
        assert_eq!(u.access(0, &BusRequest::read(0, id)).data, 0);
        u.access(0, &BusRequest::write(0, b'x' as u32, id));
        u.access(0, &BusRequest::write(0, b'y' as u32, id));
        assert_eq!(u.take_tx(), b"xy");
        assert!(!u
            .access(UART_STATUS, &BusRequest::write(UART_STATUS, 1, id))
            .is_okay());
    }
}
