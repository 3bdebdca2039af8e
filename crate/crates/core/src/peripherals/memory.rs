// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::interconnect::Width;

const PAGE_BITS: u32 = 12;
const PAGE_SIZE: usize = 1 << PAGE_BITS;

/// Byte-addressable little-endian memory, allocated lazily in 4 KiB pages so
/// that a 64 MiB main memory costs nothing until touched.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ram {
    size: u32,
    pages: BTreeMap<u32, Box<[u8; PAGE_SIZE]>>,
}

impl Ram {
    pub fn new(size: u32) -> Self {
        Self {
            size,
            pages: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    fn in_range(&self, offset: u32, len: u32) -> bool {
        (offset as u64) + (len as u64) <= self.size as u64
    }

    fn byte(&self, offset: u32) -> u8 {
        self.pages
            .get(&(offset >> PAGE_BITS))
            .map_or(0, |p| p[(offset as usize) & (PAGE_SIZE - 1)])
    }

    fn set_byte(&mut self, offset: u32, value: u8) {
        let page = self
            .pages
            .entry(offset >> PAGE_BITS)
            .or_insert_with(|| Box::new([0; PAGE_SIZE]));
        page[(offset as usize) & (PAGE_SIZE - 1)] = value;
    }

    /// Naturally aligned read; `None` if misaligned or out of range.
    pub fn read(&self, offset: u32, width: Width) -> Option<u32> {
        let n = width.bytes();
        if !offset.is_multiple_of(n) || !self.in_range(offset, n) {
            return None;
        }
        Some((0..n).fold(0u32, |acc, i| acc | (self.byte(offset + i) as u32) << (8 * i)))
    }

    pub fn write(&mut self, offset: u32, width: Width, value: u32) -> bool {
        let n = width.bytes();
        if !offset.is_multiple_of(n) || !self.in_range(offset, n) {
            return false;
        }
        for i in 0..n {
            self.set_byte(offset + i, (value >> (8 * i)) as u8);
        }
        true
    }

    pub fn read_word(&self, offset: u32) -> Option<u32> {
        self.read(offset, Width::Word)
    }

    /// Provisioning path (design-time contents), bypassing any firewall.
    pub fn load(&mut self, offset: u32, bytes: &[u8]) -> bool {
        if !self.in_range(offset, bytes.len() as u32) || bytes.len() > u32::MAX as usize {
            return false;
        }
        for (i, b) in bytes.iter().enumerate() {
            self.set_byte(offset + i as u32, *b);
        }
        true
    }

    pub fn load_words(&mut self, offset: u32, words: &[u32]) -> bool {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        self.load(offset, &bytes)
    }

    pub fn bytes(&self, offset: u32, len: u32) -> Vec<u8> {
        (0..len).map(|i| self.byte(offset.wrapping_add(i))).collect()
    }

    /// Zeroes all contents.
    pub fn clear(&mut self) {
        self.pages.clear();
    }
}
