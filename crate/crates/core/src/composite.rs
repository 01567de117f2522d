//! Layer decomposition and back-to-front compositing.

use alloc::vec::Vec;

use crate::distractor::{gripper_mask, inpaint, segment, Segment};
use crate::error::Error;
use crate::frame::{Frame, Mask};
use crate::sim::{gripper_mask as sim_gripper_mask, SceneState, BACKGROUND, GRIPPER_COLOR};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub mask: Mask,
    /// Only pixels under `mask` are meaningful.
    pub pixels: Frame,
    /// Larger is closer to the camera.
    pub depth_key: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<Layer>,
    pub background: Frame,
}

/// Depth key from the lowest mask row, `bottom_row / H`. A simulator depth
/// map, when given, adds a tie-break smaller than one row step.
pub fn assign_depth(mask: &Mask, depth_map: Option<&[Option<u32>]>) -> Result<f64, Error> {
    let bbox = mask.bbox().ok_or(Error::EmptyMask)?;
    let h = mask.height() as f64;
    let mut key = (bbox.r1 - 1) as f64 / h;
    if let Some(dm) = depth_map {
        let w = mask.width();
        let max_rank = dm.iter().flatten().copied().max().unwrap_or(0);
        let mut ranks: Vec<u32> = mask.iter_set().filter_map(|(r, c)| dm[r * w + c]).collect();
        if !ranks.is_empty() {
            ranks.sort_unstable();
            let n = ranks.len();
            let med = if n % 2 == 1 { ranks[n / 2] as f64 } else { 0.5 * (ranks[n / 2 - 1] + ranks[n / 2]) as f64 };
            key += med / (max_rank as f64 + 1.0) * (0.5 / h);
        }
    }
    Ok(key)
}

/// Paints layers over the background in ascending key order; equal keys keep
/// list order.
pub fn composite(stack: &LayerStack) -> Frame {
    let mut order: Vec<usize> = (0..stack.layers.len()).collect();
    order.sort_by(|&a, &b| stack.layers[a].depth_key.total_cmp(&stack.layers[b].depth_key).then(a.cmp(&b)));
    let mut out = stack.background.clone();
    for i in order {
        let l = &stack.layers[i];
        out.paint_from(&l.pixels, &l.mask);
    }
    out
}

pub fn layer_from_segment(frame: &Frame, seg: &Segment, depth_map: Option<&[Option<u32>]>) -> Result<Layer, Error> {
    Ok(Layer { mask: seg.mask.clone(), pixels: frame.clone(), depth_key: assign_depth(&seg.mask, depth_map)? })
}

/// Splits a frame into segment layers, a topmost gripper layer and an inpainted
/// background. Compositing the result reproduces the frame exactly.
pub fn decompose(frame: &Frame) -> Result<LayerStack, Error> {
    let mut layers = Vec::new();
    let mut union = Mask::new(frame.height(), frame.width());
    for seg in segment(frame) {
        union.union_with(&seg.mask);
        layers.push(layer_from_segment(frame, &seg, None)?);
    }
    let grip = gripper_mask(frame);
    if !grip.is_empty() {
        union.union_with(&grip);
        // the gripper moves above the table, in front of everything
        layers.push(Layer { depth_key: f64::INFINITY, mask: grip, pixels: frame.clone() });
    }
    let background = if union.is_empty() || union.is_full() { frame.clone() } else { inpaint(frame, &union)? };
    Ok(LayerStack { layers, background })
}

/// Decomposes each predicted frame, adds the fixed distractor layers and
/// composites.
pub fn reinsert(predicted: &[Frame], distractor_layers: &[Layer]) -> Result<Vec<Frame>, Error> {
    predicted
        .iter()
        .map(|f| {
            for l in distractor_layers {
                if l.mask.shape() != f.shape() || l.pixels.shape() != f.shape() {
                    return Err(Error::Shape { expected: f.shape(), got: l.mask.shape() });
                }
            }
            let mut stack = decompose(f)?;
            stack.layers.extend(distractor_layers.iter().cloned());
            Ok(composite(&stack))
        })
        .collect()
}

/// One layer per simulator object (full, unoccluded shape) keyed by depth
/// rank, plus the gripper on top of a plain background.
pub fn ground_truth_stack(state: &SceneState, height: usize, width: usize) -> LayerStack {
    let mut layers = Vec::new();
    for o in &state.objects {
        let mask = o.mask(height, width);
        if mask.is_empty() {
            continue;
        }
        layers.push(Layer { mask, pixels: Frame::filled(height, width, o.color), depth_key: o.depth_rank as f64 });
    }
    let grip = sim_gripper_mask(state.gripper, height, width);
    if !grip.is_empty() {
        layers.push(Layer { mask: grip, pixels: Frame::filled(height, width, GRIPPER_COLOR), depth_key: f64::INFINITY });
    }
    LayerStack { layers, background: Frame::filled(height, width, BACKGROUND) }
}
