use std::fmt;

use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::dense::{next_index, strides, DenseTensor, C32};
use crate::store::{BlockRef, BlockStore, StoreError};

/// Name of a tensor index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(name: impl Into<String>) -> Self {
        Label(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label(s)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn labels<const N: usize>(names: [&str; N]) -> Vec<Label> {
    names.iter().map(|&n| Label::from(n)).collect()
}

/// Uniform grid of equally sized blocks over a labelled tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    labels: Vec<Label>,
    global_extents: Vec<usize>,
    block_extents: Vec<usize>,
}

impl BlockLayout {
    pub fn new(
        labels: Vec<Label>,
        global_extents: Vec<usize>,
        block_extents: Vec<usize>,
    ) -> Result<Self, PlanError> {
        if labels.len() != global_extents.len() || labels.len() != block_extents.len() {
            return Err(PlanError::Layout(format!(
                "{} labels, {} global extents, {} block extents",
                labels.len(),
                global_extents.len(),
                block_extents.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(PlanError::Layout(format!("label {l} appears twice")));
            }
            let (g, b) = (global_extents[i], block_extents[i]);
            if g == 0 || b == 0 {
                return Err(PlanError::Layout(format!("index {l} has a zero extent")));
            }
            if g % b != 0 {
                return Err(PlanError::Layout(format!(
                    "index {l}: block extent {b} does not divide global extent {g}"
                )));
            }
        }
        Ok(Self {
            labels,
            global_extents,
            block_extents,
        })
    }

    /// Single-block layout.
    pub fn dense(labels: Vec<Label>, extents: Vec<usize>) -> Result<Self, PlanError> {
        Self::new(labels, extents.clone(), extents)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn global_extents(&self) -> &[usize] {
        &self.global_extents
    }

    pub fn block_extents(&self) -> &[usize] {
        &self.block_extents
    }

    pub fn order(&self) -> usize {
        self.labels.len()
    }

    pub fn position(&self, label: &Label) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn grid(&self) -> Vec<usize> {
        self.global_extents
            .iter()
            .zip(&self.block_extents)
            .map(|(g, b)| g / b)
            .collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.grid().iter().product()
    }

    pub fn block_elements(&self) -> usize {
        self.block_extents.iter().product()
    }

    pub fn global_elements(&self) -> usize {
        self.global_extents.iter().product()
    }

    /// Row-major position of a grid coordinate.
    pub fn linear(&self, coord: &[usize]) -> usize {
        coord
            .iter()
            .zip(self.grid())
            .fold(0, |acc, (&c, g)| acc * g + c)
    }

    /// All grid coordinates in row-major order.
    pub fn coords(&self) -> Vec<Vec<usize>> {
        let grid = self.grid();
        let mut out = Vec::with_capacity(self.num_blocks());
        let mut idx = vec![0; grid.len()];
        loop {
            out.push(idx.clone());
            if !next_index(&mut idx, &grid) {
                return out;
            }
        }
    }

    pub fn with_block_extents(&self, block_extents: Vec<usize>) -> Result<Self, PlanError> {
        Self::new(self.labels.clone(), self.global_extents.clone(), block_extents)
    }

    /// Copies block `coord` out of the assembled tensor.
    pub fn extract_block(&self, dense: &DenseTensor, coord: &[usize]) -> DenseTensor {
        let origin: Vec<usize> = coord.iter().zip(&self.block_extents).map(|(c, b)| c * b).collect();
        let gstrides = strides(&self.global_extents);
        let base: usize = origin.iter().zip(&gstrides).map(|(o, s)| o * s).sum();
        copy_box(dense.data(), base, &gstrides, &self.block_extents)
    }

    /// Writes a block into its place in an assembled tensor buffer.
    fn insert_block(&self, target: &mut [C32], block: &DenseTensor, coord: &[usize]) {
        let gstrides = strides(&self.global_extents);
        let origin: usize = coord
            .iter()
            .zip(&self.block_extents)
            .zip(&gstrides)
            .map(|((c, b), s)| c * b * s)
            .sum();
        let order = self.order();
        let row = if order == 0 { 1 } else { self.block_extents[order - 1] };
        let outer_extents = &self.block_extents[..order.saturating_sub(1)];
        let mut idx = vec![0; outer_extents.len()];
        let mut src = 0;
        loop {
            let off: usize = origin + idx.iter().zip(&gstrides).map(|(i, s)| i * s).sum::<usize>();
            target[off..off + row].copy_from_slice(&block.data()[src..src + row]);
            src += row;
            if !next_index(&mut idx, outer_extents) {
                break;
            }
        }
    }
}

fn copy_box(
    data: &[C32],
    base: usize,
    gstrides: &[usize],
    box_extents: &[usize],
) -> DenseTensor {
    let order = box_extents.len();
    let row = if order == 0 { 1 } else { box_extents[order - 1] };
    let outer = &box_extents[..order.saturating_sub(1)];
    let mut out = Vec::with_capacity(box_extents.iter().product());
    let mut idx = vec![0; outer.len()];
    loop {
        let off = base + idx.iter().zip(gstrides).map(|(i, s)| i * s).sum::<usize>();
        out.extend_from_slice(&data[off..off + row]);
        if !next_index(&mut idx, outer) {
            break;
        }
    }
    DenseTensor::new(box_extents.to_vec(), out).expect("block extents are positive")
}

/// A tensor held as a grid of blocks in the block store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockArray {
    layout: BlockLayout,
    /// One block per grid coordinate, row-major.
    blocks: Vec<BlockRef>,
}

impl BlockArray {
    pub fn from_blocks(layout: BlockLayout, blocks: Vec<BlockRef>) -> Result<Self, PlanError> {
        if blocks.len() != layout.num_blocks() {
            return Err(PlanError::Layout(format!(
                "{} blocks for a grid of {}",
                blocks.len(),
                layout.num_blocks()
            )));
        }
        if let Some(bad) = blocks.iter().find(|b| b.extents != layout.block_extents) {
            return Err(PlanError::Layout(format!(
                "block {} has extents {:?}, layout expects {:?}",
                bad.block_id, bad.extents, layout.block_extents
            )));
        }
        Ok(Self { layout, blocks })
    }

    /// Splits `dense` into blocks, homing them round-robin over the store's nodes.
    pub fn scatter(store: &BlockStore, layout: BlockLayout, dense: &DenseTensor) -> Result<Self, PlanError> {
        if dense.extents() != layout.global_extents() {
            return Err(PlanError::Layout(format!(
                "tensor extents {:?} do not match layout {:?}",
                dense.extents(),
                layout.global_extents()
            )));
        }
        let mut blocks = Vec::with_capacity(layout.num_blocks());
        for (i, coord) in layout.coords().iter().enumerate() {
            let block = layout.extract_block(dense, coord);
            blocks.push(store.put(i % store.nodes(), &block)?);
        }
        Ok(Self { layout, blocks })
    }

    /// Reads every block and assembles the full tensor.
    pub fn gather(&self, store: &BlockStore, node: usize) -> Result<DenseTensor, StoreError> {
        let mut data = vec![C32::new(0.0, 0.0); self.layout.global_elements()];
        for (coord, r) in self.layout.coords().iter().zip(&self.blocks) {
            let block = store.get(node, r)?;
            self.layout.insert_block(&mut data, &block, coord);
        }
        Ok(DenseTensor::new(self.layout.global_extents.clone(), data).expect("layout extents are positive"))
    }

    /// Re-splits the array with new block extents. Old blocks are deleted.
    pub fn rechunk(self, store: &BlockStore, block_extents: Vec<usize>) -> Result<Self, PlanError> {
        if block_extents == self.layout.block_extents {
            return Ok(self);
        }
        let layout = self.layout.with_block_extents(block_extents)?;
        let dense = self.gather(store, 0)?;
        self.delete(store)?;
        Self::scatter(store, layout, &dense)
    }

    pub fn delete(&self, store: &BlockStore) -> Result<(), StoreError> {
        self.blocks.iter().try_for_each(|b| store.delete(b))
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn blocks(&self) -> &[BlockRef] {
        &self.blocks
    }

    pub fn block(&self, coord: &[usize]) -> &BlockRef {
        &self.blocks[self.layout.linear(coord)]
    }
}
