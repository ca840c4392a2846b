use crate::frontend::resolve::mask;

/// MSB-first CRC of `width` bits over the big-endian bytes of the
/// arguments, each padded to whole bytes. Zero initial value, no
/// reflection, no final xor.
pub fn crc_hash(poly: u64, width: u32, args: &[(u64, u32)]) -> u64 {
    let m = mask(width);
    let poly = poly & m;
    let mut reg = 0u64;
    for &(v, w) in args {
        let nbytes = w.div_ceil(8);
        let v = v & mask(w);
        for i in (0..nbytes).rev() {
            let byte = (v >> (8 * i)) as u8;
            for b in (0..8).rev() {
                let bit = ((byte >> b) & 1) as u64;
                let top = (reg >> (width - 1)) & 1;
                reg = (reg << 1) & m;
                if top ^ bit == 1 {
                    reg ^= poly;
                }
            }
        }
    }
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xmodem_check_value() {
        let msg: Vec<(u64, u32)> = b"123456789".iter().map(|&b| (b as u64, 8)).collect();
        assert_eq!(crc_hash(0x1021, 16, &msg), 0x31C3);
    }

    #[test]
    fn wide_argument_is_big_endian() {
        let a = crc_hash(0x04C1_1DB7, 32, &[(0x3132, 16)]);
        let b = crc_hash(0x04C1_1DB7, 32, &[(0x31, 8), (0x32, 8)]);
        assert_eq!(a, b);
    }

    #[test]
    fn result_fits_width() {
        for v in 0..200u64 {
            assert!(crc_hash(0x7, 3, &[(v, 32)]) < 8);
        }
    }
}
