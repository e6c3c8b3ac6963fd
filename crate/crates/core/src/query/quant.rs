//! Int8 first pass for cosine queries over the semantic column.
//!
//! Every record `v` is stored as `s * q + e` with `q` in `[-127, 127]^d`.
//! For a query `u`, the cosine `v.u / (|v| |u|)` differs from the integer
//! estimate by at most a per-record slack that is computable from norms
//! alone, so any record whose upper bound falls below the k-th best lower
//! bound can be discarded without being scored exactly. Survivors are
//! rescored with the exact `f64` cosine, which makes the final ranking
//! identical to a full exact scan.

use std::collections::BinaryHeap;

use crate::features::FeatureRecord;

use super::score::{dot, Ranked};

/// Covers `f64` rounding in both the bound arithmetic and the exact rescoring.
const ROUNDING_MARGIN: f64 = 1e-9;
const LANES: usize = 32;

struct Quantized {
    codes: Vec<i8>,
    scale: f64,
    /// `|s * q|`
    code_norm: f64,
    /// `|v - s * q|`
    residual: f64,
}

fn quantize(v: &[f64], stride: usize) -> Quantized {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if max > 0.0 { max / 127.0 } else { 0.0 };
    let mut codes = vec![0i8; stride];
    let (mut code_sq, mut res_sq) = (0.0, 0.0);
    for (c, &x) in codes.iter_mut().zip(v) {
        let q = if scale > 0.0 {
            (x / scale).round().clamp(-127.0, 127.0)
        } else {
            0.0
        };
        *c = q as i8;
        let approx = scale * q;
        code_sq += approx * approx;
        res_sq += (x - approx) * (x - approx);
    }
    Quantized {
        codes,
        scale,
        code_norm: code_sq.sqrt(),
        residual: res_sq.sqrt(),
    }
}

/// A quantized query, normalized to unit length before quantization.
pub struct QueryCode {
    codes: Vec<i8>,
    scale: f64,
    residual: f64,
}

pub struct SemanticIndex {
    dim: usize,
    stride: usize,
    codes: Vec<i8>,
    /// `s_r / |v_r|`
    scale: Vec<f64>,
    /// `|s_r q_r| / |v_r|`
    code_norm: Vec<f64>,
    /// `|v_r - s_r q_r| / |v_r|`
    residual: Vec<f64>,
}

impl SemanticIndex {
    /// `None` unless every record carries a semantic vector of one common dimension.
    pub fn build(records: &[FeatureRecord]) -> Option<Self> {
        let dim = records.first()?.semantic.as_ref()?.len();
        if dim == 0 {
            return None;
        }
        let stride = dim.div_ceil(LANES) * LANES;
        let n = records.len();
        let mut index = Self {
            dim,
            stride,
            codes: Vec::with_capacity(n * stride),
            scale: Vec::with_capacity(n),
            code_norm: Vec::with_capacity(n),
            residual: Vec::with_capacity(n),
        };
        for rec in records {
            let v = rec.semantic.as_deref().filter(|v| v.len() == dim)?;
            let norm = dot(v, v).sqrt();
            let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            let q = quantize(v, stride);
            index.codes.extend_from_slice(&q.codes);
            index.scale.push(q.scale * inv);
            index.code_norm.push(q.code_norm * inv);
            index.residual.push(q.residual * inv);
        }
        Some(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    /// `None` for a zero or wrongly sized query.
    pub fn encode_query(&self, u: &[f64]) -> Option<QueryCode> {
        if u.len() != self.dim {
            return None;
        }
        let norm = dot(u, u).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        let unit: Vec<f64> = u.iter().map(|x| x / norm).collect();
        let q = quantize(&unit, self.stride);
        Some(QueryCode {
            codes: q.codes,
            scale: q.scale,
            residual: q.residual,
        })
    }

    /// Integer-estimated cosine of every record, in id order.
    pub fn approx_scores(&self, query: &QueryCode, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.len(), 0.0);
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: AVX2 support was just detected; code rows are padded to whole lanes.
                unsafe { scan_avx2(&self.codes, self.stride, &self.scale, query, out) };
                return;
            }
        }
        for ((codes, &a), o) in self.codes.chunks_exact(self.stride).zip(&self.scale).zip(out) {
            *o = a * query.scale * dot_i8_scalar(codes, &query.codes) as f64;
        }
    }

    /// The exact top `k` given estimates from [`Self::approx_scores`].
    ///
    /// `exact` must return the exact cosine of a record id.
    pub fn select(
        &self,
        query: &QueryCode,
        approx: &[f64],
        k: usize,
        mut exact: impl FnMut(u64) -> f64,
    ) -> Vec<Ranked> {
        let n = approx.len();
        if k == 0 || n == 0 {
            return Vec::new();
        }
        let k = k.min(n);
        let err = query.residual;
        let slack = |r: usize| self.code_norm[r] * err + self.residual[r] + ROUNDING_MARGIN;
        let lower = (0..n).map(|r| approx[r] - slack(r));
        let threshold = kth_largest(lower, k);
        let candidates: Vec<Ranked> = (0..n)
            .filter(|&r| approx[r] + slack(r) >= threshold)
            .map(|r| Ranked {
                noise_id: r as u64,
                score: exact(r as u64),
            })
            .collect();
        super::score::take_top(candidates, k)
    }
}

/// Reversed total order, so a max-heap of these keeps the smallest value on top.
struct MinF64(f64);

impl PartialEq for MinF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for MinF64 {}

impl PartialOrd for MinF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MinF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// The `k`-th largest value of a non-empty stream holding at least `k` values.
fn kth_largest(values: impl Iterator<Item = f64>, k: usize) -> f64 {
    if k > 64 {
        let mut all: Vec<f64> = values.collect();
        let (_, kth, _) = all.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        return *kth;
    }
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for v in values {
        if heap.len() < k {
            heap.push(MinF64(v));
        } else if let Some(mut top) = heap.peek_mut() {
            if v > top.0 {
                *top = MinF64(v);
            }
        }
    }
    heap.peek().map_or(f64::NEG_INFINITY, |m| m.0)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn scan_avx2(codes: &[i8], stride: usize, scale: &[f64], query: &QueryCode, out: &mut [f64]) {
    for ((row, &a), o) in codes.chunks_exact(stride).zip(scale).zip(out) {
        *o = a * query.scale * dot_i8_avx2(row, &query.codes) as f64;
    }
}

pub(crate) fn dot_i8_scalar(a: &[i8], b: &[i8]) -> i32 {
    a.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).sum()
}

/// Requires equal lengths that are a multiple of 32 and codes in `[-127, 127]`.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_i8_avx2(a: &[i8], b: &[i8]) -> i32 {
    use std::arch::x86_64::*;
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len() % LANES, 0);
    let ones = _mm256_set1_epi16(1);
    let mut acc0 = _mm256_setzero_si256();
    let mut acc1 = _mm256_setzero_si256();
    let (pa, pb) = (a.as_ptr(), b.as_ptr());
    let blocks = a.len() / LANES;
    let step = |i: usize| {
        let va = _mm256_loadu_si256(pa.add(i * LANES) as *const __m256i);
        let vb = _mm256_loadu_si256(pb.add(i * LANES) as *const __m256i);
        // |b| * (a * sign(b)) == a * b; pair sums stay below i16::MAX for |a|, |b| <= 127
        let pairs = _mm256_maddubs_epi16(_mm256_abs_epi8(vb), _mm256_sign_epi8(va, vb));
        _mm256_madd_epi16(pairs, ones)
    };
    let mut i = 0;
    while i + 1 < blocks {
        acc0 = _mm256_add_epi32(acc0, step(i));
        acc1 = _mm256_add_epi32(acc1, step(i + 1));
        i += 2;
    }
    if i < blocks {
        acc0 = _mm256_add_epi32(acc0, step(i));
    }
    let acc = _mm256_add_epi32(acc0, acc1);
    let lo = _mm256_castsi256_si128(acc);
    let hi = _mm256_extracti128_si256(acc, 1);
    let s = _mm_add_epi32(lo, hi);
    let s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0b01_00_11_10));
    let s = _mm_add_epi32(s, _mm_shuffle_epi32(s, 0b10_11_00_01));
    _mm_cvtsi128_si32(s)
}
