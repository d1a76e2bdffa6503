//! Exact Euclidean distance transform over squared integer distances.
//!
//! Two 1-D passes (columns, then rows) in the style of Meijster et al.
//! All arithmetic stays in `i64`, so the result is the exact squared
//! pixel distance to the nearest set pixel - no chamfer approximation
//! and no floating-point envelope decisions.

/// Squared distance (in pixels) from every cell to the nearest set cell.
///
/// `set` is row-major with `width * height` entries and must contain at
/// least one `true`.
pub(crate) fn squared_edt(set: &[bool], width: usize, height: usize) -> Vec<i64> {
    assert_eq!(set.len(), width * height);
    debug_assert!(set.iter().any(|&s| s));

    // Vertical distances per column; `inf` exceeds any in-raster distance.
    let inf = (width + height) as i64;
    let mut g = vec![0i64; width * height];
    for x in 0..width {
        g[x] = if set[x] { 0 } else { inf };
        for y in 1..height {
            let i = y * width + x;
            g[i] = if set[i] { 0 } else { (g[i - width] + 1).min(inf) };
        }
        for y in (0..height.saturating_sub(1)).rev() {
            let i = y * width + x;
            if g[i + width] + 1 < g[i] {
                g[i] = g[i + width] + 1;
            }
        }
    }

    // Horizontal pass: lower envelope of the parabolas (x - i)^2 + g(i)^2.
    let mut dt = vec![0i64; width * height];
    let mut s = vec![0usize; width]; // parabola centers in the envelope
    let mut t = vec![0usize; width]; // first column where s[q] is minimal
    for y in 0..height {
        let row = &g[y * width..(y + 1) * width];
        let f = |x: usize, i: usize| -> i64 {
            let dx = x as i64 - i as i64;
            dx * dx + row[i] * row[i]
        };
        // Rightmost column where parabola `i` still beats parabola `u` (u > i).
        let sep = |i: usize, u: usize| -> i64 {
            let (iu, ii) = (u as i64, i as i64);
            (iu * iu - ii * ii + row[u] * row[u] - row[i] * row[i]).div_euclid(2 * (iu - ii))
        };

        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..width {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
                t[0] = 0;
            } else {
                let w = 1 + sep(s[q as usize], u);
                if w < width as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = w as usize;
                }
            }
        }
        for u in (0..width).rev() {
            dt[y * width + u] = f(u, s[q as usize]);
            if u == t[q as usize] && q > 0 {
                q -= 1;
            }
        }
    }
    dt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(set: &[bool], width: usize, height: usize) -> Vec<i64> {
        let cells: Vec<(i64, i64)> = (0..height)
            .flat_map(|r| (0..width).map(move |c| (c as i64, r as i64)))
            .filter(|&(c, r)| set[r as usize * width + c as usize])
            .collect();
        (0..height)
            .flat_map(|r| (0..width).map(move |c| (c as i64, r as i64)))
            .map(|(c, r)| {
                cells
                    .iter()
                    .map(|&(sc, sr)| (c - sc) * (c - sc) + (r - sr) * (r - sr))
                    .min()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn single_pixel_is_pythagorean() {
        let (w, h) = (8, 8);
        let mut set = vec![false; w * h];
        set[0] = true;
        let dt = squared_edt(&set, w, h);
        assert_eq!(dt[0], 0);
        assert_eq!(dt[4 * w + 3], 25); // (3,4) at distance 5
        assert_eq!(dt, brute_force(&set, w, h));
    }

    #[test]
    fn random_rasters_match_brute_force() {
        // Small deterministic xorshift so the fixture is stable.
        let mut state = 0x853c49e6748fea9bu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..40 {
            let w = 3 + (next() % 30) as usize;
            let h = 3 + (next() % 30) as usize;
            let mut set: Vec<bool> = (0..w * h).map(|_| next() % 13 == 0).collect();
            set[(next() % (w as u64 * h as u64)) as usize] = true;
            assert_eq!(
                squared_edt(&set, w, h),
                brute_force(&set, w, h),
                "trial {trial} ({w}x{h})"
            );
        }
    }

    #[test]
    fn full_raster_is_zero() {
        let set = vec![true; 6 * 4];
        assert!(squared_edt(&set, 6, 4).iter().all(|&d| d == 0));
    }

    #[test]
    fn single_row_and_column() {
        let set = vec![false, false, true, false, false];
        assert_eq!(squared_edt(&set, 5, 1), vec![4, 1, 0, 1, 4]);
        assert_eq!(squared_edt(&set, 1, 5), vec![4, 1, 0, 1, 4]);
    }
}
