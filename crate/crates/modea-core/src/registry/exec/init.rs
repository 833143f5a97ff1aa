//! Population initialization kernels.
//!
//! All five variants return `np` rows of `dim` coordinates inside
//! `[lb, ub]`, deterministically for a given RNG stream.

use rand::Rng;
use rand_distr::Distribution;

use crate::rng::Stream;

/// Dispatch by variant index: 1 Uniform, 2 Sobol, 3 LHS, 4 Halton, 5 Normal.
pub fn initialize(
    index: u16,
    np: usize,
    dim: usize,
    lb: f64,
    ub: f64,
    rng: &mut Stream,
) -> Vec<Vec<f64>> {
    match index {
        1 => uniform(np, dim, lb, ub, rng),
        2 => sobol(np, dim, lb, ub, rng),
        3 => lhs(np, dim, lb, ub, rng),
        4 => halton(np, dim, lb, ub, rng),
        5 => normal(np, dim, lb, ub, rng),
        _ => panic!("unknown initialization variant {index}"),
    }
}

/// Draw order: row-major, one uniform per coordinate.
pub fn uniform(np: usize, dim: usize, lb: f64, ub: f64, rng: &mut Stream) -> Vec<Vec<f64>> {
    (0..np)
        .map(|_| (0..dim).map(|_| rng.random_range(lb..ub)).collect())
        .collect()
}

/// Latin hypercube: per dimension, a random permutation assigns each row one
/// of `np` equal-width slices, then a uniform jitter places the point within
/// its slice. Draw order: per dimension, the shuffle first, then `np` jitters.
pub fn lhs(np: usize, dim: usize, lb: f64, ub: f64, rng: &mut Stream) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]; np];
    let width = (ub - lb) / np as f64;
    for j in 0..dim {
        let mut perm: Vec<usize> = (0..np).collect();
        for i in (1..np).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        for (i, row) in out.iter_mut().enumerate() {
            let u: f64 = rng.random();
            row[j] = lb + (perm[i] as f64 + u) * width;
        }
    }
    out
}

/// Centre-biased start: `N((ub+lb)/2, (ub−lb)/6)` per coordinate, clipped to
/// the box. Draw order: row-major, one normal per coordinate.
pub fn normal(np: usize, dim: usize, lb: f64, ub: f64, rng: &mut Stream) -> Vec<Vec<f64>> {
    let dist = rand_distr::Normal::new((ub + lb) / 2.0, (ub - lb) / 6.0)
        .expect("positive std for non-degenerate bounds");
    (0..np)
        .map(|_| {
            (0..dim)
                .map(|_| dist.sample(rng).clamp(lb, ub))
                .collect()
        })
        .collect()
}

/// Scrambled Sobol sequence. Direction numbers are generated from primitive
/// polynomials over GF(2) with unit initial values; the scramble is a random
/// digital shift (per-dimension XOR mask) drawn from `rng`.
pub fn sobol(np: usize, dim: usize, lb: f64, ub: f64, rng: &mut Stream) -> Vec<Vec<f64>> {
    const BITS: u32 = 32;
    let polys = primitive_polynomials(dim.saturating_sub(1));
    // Direction values per dimension; v[i] corresponds to output bit i+1.
    let mut dirs: Vec<[u32; BITS as usize]> = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut m = [1u64; BITS as usize];
        if d > 0 {
            let (poly, s) = polys[d - 1];
            for i in s as usize..BITS as usize {
                let mut mi = m[i - s as usize] ^ (m[i - s as usize] << s);
                for k in 1..s {
                    if (poly >> (s - k)) & 1 == 1 {
                        mi ^= m[i - k as usize] << k;
                    }
                }
                m[i] = mi;
            }
        }
        let mut v = [0u32; BITS as usize];
        for i in 0..BITS as usize {
            v[i] = (m[i] << (BITS as usize - 1 - i)) as u32;
        }
        dirs.push(v);
    }
    let shifts: Vec<u32> = (0..dim).map(|_| rng.random::<u32>()).collect();
    let scale = (ub - lb) / (u32::MAX as f64 + 1.0);
    (0..np)
        .map(|n| {
            (0..dim)
                .map(|j| {
                    let mut x = 0u32;
                    let mut bits = n as u32;
                    let mut i = 0;
                    while bits != 0 {
                        if bits & 1 == 1 {
                            x ^= dirs[j][i];
                        }
                        bits >>= 1;
                        i += 1;
                    }
                    lb + f64::from(x ^ shifts[j]) * scale
                })
                .collect()
        })
        .collect()
}

/// Scrambled Halton sequence: prime-base radical inverses with a per-dimension
/// multiplicative digit permutation and a random shared start index.
pub fn halton(np: usize, dim: usize, lb: f64, ub: f64, rng: &mut Stream) -> Vec<Vec<f64>> {
    let bases = first_primes(dim);
    let mults: Vec<u64> = bases
        .iter()
        .map(|&b| rng.random_range(1..b)) // prime base: every 1..b is coprime
        .collect();
    let start: u64 = rng.random_range(0..4096);
    (0..np as u64)
        .map(|i| {
            bases
                .iter()
                .zip(&mults)
                .map(|(&b, &w)| {
                    let mut n = start + i;
                    let mut inv = 0.0;
                    let mut denom = 1.0;
                    while n > 0 {
                        let digit = (n % b * w) % b;
                        denom *= b as f64;
                        inv += digit as f64 / denom;
                        n /= b;
                    }
                    lb + inv * (ub - lb)
                })
                .collect()
        })
        .collect()
}

/// First `n` primes, starting at 2.
fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut cand: u64 = 2;
    while primes.len() < n {
        if primes.iter().all(|&p| cand % p != 0) {
            primes.push(cand);
        }
        cand += 1;
    }
    primes
}

/// The first `n` primitive polynomials over GF(2) in (degree, encoding)
/// order, returned as `(bitmask, degree)`. The bitmask includes the leading
/// and trailing 1 coefficients, e.g. `x^3 + x + 1` is `0b1011`.
fn primitive_polynomials(n: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(n);
    let mut degree = 1u32;
    while out.len() < n {
        // Candidate interior coefficients; constant term must be 1.
        for a in 0..(1u32 << degree.saturating_sub(1)) {
            let poly = (1 << degree) | (a << 1) | 1;
            if is_primitive(poly, degree) {
                out.push((poly, degree));
                if out.len() == n {
                    break;
                }
            }
        }
        degree += 1;
        assert!(degree <= 16, "primitive polynomial search ran away");
    }
    out
}

/// Multiply two GF(2) polynomials modulo `poly` of degree `s`.
fn gf2_mulmod(mut a: u64, mut b: u64, poly: u64, s: u32) -> u64 {
    let mut acc = 0u64;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if (a >> s) & 1 == 1 {
            a ^= poly;
        }
    }
    acc
}

/// `x^e mod poly` over GF(2).
fn gf2_powx(mut e: u64, poly: u64, s: u32) -> u64 {
    let mut base = 2u64 % (1 << s).max(2); // the polynomial "x"
    if s == 1 {
        base = poly & 1; // x ≡ 1 mod (x+1)
        let _ = e;
        return base;
    }
    let mut acc = 1u64;
    while e != 0 {
        if e & 1 == 1 {
            acc = gf2_mulmod(acc, base, poly, s);
        }
        base = gf2_mulmod(base, base, poly, s);
        e >>= 1;
    }
    acc
}

/// Primitivity test: x must have multiplicative order 2^s − 1 modulo `poly`.
fn is_primitive(poly: u32, s: u32) -> bool {
    if s == 1 {
        return poly == 0b11; // x + 1
    }
    let n: u64 = (1u64 << s) - 1;
    let poly = u64::from(poly);
    if gf2_powx(n, poly, s) != 1 {
        return false;
    }
    let mut rem = n;
    let mut factors = Vec::new();
    let mut q = 2u64;
    while q * q <= rem {
        if rem % q == 0 {
            factors.push(q);
            while rem % q == 0 {
                rem /= q;
            }
        }
        q += 1;
    }
    if rem > 1 {
        factors.push(rem);
    }
    factors.iter().all(|&f| gf2_powx(n / f, poly, s) != 1)
}
