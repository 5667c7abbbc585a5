//! Deterministic flat parameter layout.
//!
//! Every learnable tensor of the denoiser occupies a contiguous,
//! non-overlapping segment of one flat vector, in a fixed order derived
//! from the config. The layout is what makes coordinate-wise gradient
//! checking and bit-exact checkpointing possible.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use super::DenoiserConfig;

/// One named segment: a `rows x cols` tensor at `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered table of segments covering the flat vector exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl Layout {
    pub fn build(config: &DenoiserConfig) -> Layout {
        let e = config.embed_dim;
        let k = config.k;
        let hidden = 4 * e;
        let mut entries = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: String, rows: usize, cols: usize| {
            entries.push(LayoutEntry {
                name,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
        };

        push("token_embed.weight".into(), e, 1);
        push("token_embed.bias".into(), e, 1);
        push("time_embed.fc1.weight".into(), e, e);
        push("time_embed.fc1.bias".into(), e, 1);
        push("time_embed.fc2.weight".into(), e, e);
        push("time_embed.fc2.bias".into(), e, 1);
        push("cond_embed.fc1.weight".into(), e, k);
        push("cond_embed.fc1.bias".into(), e, 1);
        push("cond_embed.fc2.weight".into(), e, e);
        push("cond_embed.fc2.bias".into(), e, 1);
        for l in 0..config.layers {
            push(format!("blocks.{l}.modulation.weight"), 6 * e, e);
            push(format!("blocks.{l}.modulation.bias"), 6 * e, 1);
            push(format!("blocks.{l}.attn.wq.weight"), e, e);
            push(format!("blocks.{l}.attn.wq.bias"), e, 1);
            push(format!("blocks.{l}.attn.wk.weight"), e, e);
            push(format!("blocks.{l}.attn.wk.bias"), e, 1);
            push(format!("blocks.{l}.attn.wv.weight"), e, e);
            push(format!("blocks.{l}.attn.wv.bias"), e, 1);
            push(format!("blocks.{l}.attn.wo.weight"), e, e);
            push(format!("blocks.{l}.attn.wo.bias"), e, 1);
            push(format!("blocks.{l}.mlp.fc1.weight"), hidden, e);
            push(format!("blocks.{l}.mlp.fc1.bias"), hidden, 1);
            push(format!("blocks.{l}.mlp.fc2.weight"), e, hidden);
            push(format!("blocks.{l}.mlp.fc2.bias"), e, 1);
        }
        push("final.modulation.weight".into(), 2 * e, e);
        push("final.modulation.bias".into(), 2 * e, 1);
        push("final.head.weight".into(), 1, e);
        push("final.head.bias".into(), 1, 1);

        Layout {
            entries,
            total: offset,
        }
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    /// Total flat-vector length.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn find(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Whether this segment is zero-initialized: the output projection
    /// of every adaptive-normalization modulation branch and the final
    /// head, so a fresh network outputs exactly zero.
    pub fn zero_initialized(name: &str) -> bool {
        name.contains("modulation") || name.starts_with("final.head")
    }
}

/// Cursor that hands out segment ranges in layout order, checking names
/// as it goes. Forward/backward resolve their segments through this, so
/// a layout/net mismatch fails loudly instead of reading wrong weights.
pub struct Cursor<'a> {
    entries: &'a [LayoutEntry],
    next: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(layout: &'a Layout) -> Self {
        Cursor {
            entries: &layout.entries,
            next: 0,
        }
    }

    /// Range of the next segment, which must carry `suffix` at the end
    /// of its name.
    pub fn take(&mut self, suffix: &str) -> Range<usize> {
        let entry = &self.entries[self.next];
        debug_assert!(
            entry.name.ends_with(suffix),
            "layout cursor expected *{suffix}, found {}",
            entry.name
        );
        self.next += 1;
        entry.range()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DenoiserConfig {
        DenoiserConfig {
            embed_dim: 4,
            heads: 2,
            layers: 1,
            k: 3,
            max_steps: 10,
        }
    }

    #[test]
    fn segments_are_contiguous_and_exhaustive() {
        let layout = Layout::build(&tiny());
        let mut expected_offset = 0;
        for entry in layout.entries() {
            assert_eq!(entry.offset, expected_offset, "{}", entry.name);
            expected_offset += entry.len();
        }
        assert_eq!(expected_offset, layout.len());
    }

    #[test]
    fn named_lookup_and_shapes() {
        let layout = Layout::build(&tiny());
        let wq = layout.find("blocks.0.attn.wq.weight").unwrap();
        assert_eq!((wq.rows, wq.cols), (4, 4));
        let m = layout.find("blocks.0.modulation.weight").unwrap();
        assert_eq!((m.rows, m.cols), (24, 4));
        let head = layout.find("final.head.weight").unwrap();
        assert_eq!((head.rows, head.cols), (1, 4));
        let cond = layout.find("cond_embed.fc1.weight").unwrap();
        assert_eq!((cond.rows, cond.cols), (4, 3));
    }

    #[test]
    fn zero_init_marks_modulation_and_head() {
        assert!(Layout::zero_initialized("blocks.3.modulation.weight"));
        assert!(Layout::zero_initialized("final.modulation.bias"));
        assert!(Layout::zero_initialized("final.head.weight"));
        assert!(!Layout::zero_initialized("blocks.0.attn.wq.weight"));
        assert!(!Layout::zero_initialized("token_embed.weight"));
    }
}
