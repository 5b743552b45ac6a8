//! Conversion of scalar-value ranges into sequences of UTF-8 byte ranges.

/// One alternative: the i-th byte must fall in `ranges[i]`.
pub(crate) type ByteSeq = Vec<(u8, u8)>;

const MAX_FOR_LEN: [u32; 4] = [0x7F, 0x7FF, 0xFFFF, 0x10FFFF];

fn encode(c: u32, buf: &mut [u8; 4]) -> usize {
    char::from_u32(c)
        .expect("surrogates are removed before encoding")
        .encode_utf8(buf)
        .len()
}

/// Byte-range sequences matching exactly the UTF-8 encodings of the scalar
/// values in `lo..=hi`; surrogates inside the range are skipped.
pub(crate) fn sequences(lo: u32, hi: u32) -> Vec<ByteSeq> {
    let mut out = Vec::new();
    let mut work = vec![(lo, hi)];
    'outer: while let Some((lo, hi)) = work.pop() {
        if lo > hi {
            continue;
        }
        if lo <= 0xDFFF && hi >= 0xD800 {
            if lo < 0xD800 {
                work.push((lo, 0xD7FF));
            }
            if hi > 0xDFFF {
                work.push((0xE000, hi));
            }
            continue;
        }
        // Split at encoded-length boundaries.
        for &max in &MAX_FOR_LEN[..3] {
            if lo <= max && hi > max {
                work.push((max + 1, hi));
                work.push((lo, max));
                continue 'outer;
            }
        }
        if hi <= 0x7F {
            out.push(vec![(lo as u8, hi as u8)]);
            continue;
        }
        // Split until every continuation byte spans its full range or a
        // single value, so the sequence is a product of byte ranges.
        for i in 1..4 {
            let m = (1u32 << (6 * i)) - 1;
            if lo & !m != hi & !m {
                if lo & m != 0 {
                    work.push(((lo | m) + 1, hi));
                    work.push((lo, lo | m));
                    continue 'outer;
                }
                if hi & m != m {
                    work.push((hi & !m, hi));
                    work.push((lo, (hi & !m) - 1));
                    continue 'outer;
                }
            }
        }
        let (mut a, mut b) = ([0u8; 4], [0u8; 4]);
        let n = encode(lo, &mut a);
        let n2 = encode(hi, &mut b);
        debug_assert_eq!(n, n2);
        out.push((0..n).map(|i| (a[i], b[i])).collect());
    }
    out.sort();
    out
}
