// Licensed under the Apache-2.0 license

//! Drives the authentication core by hand through its register map:
//! key words, START, polling DONE, then reading RESULT.
//!
//! ```bash
//! cargo run -p edgegate --example enclave_handshake
//! ```

use edgegate::enclave::{
    bytes_to_words, Enclave, LatencyModel, CTRL_DONE, CTRL_IDLE, CTRL_OFFSET, CTRL_START,
    KEY_OFFSET, RESULT_OFFSET, RESULT_VALID,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let secret: [u8; 32] = std::array::from_fn(|i| (i as u8).wrapping_mul(37) ^ 0x5C);
    let mut enclave = Enclave::provision_bytes(&secret, LatencyModel::pipelined())?;
    println!("after provisioning: {}", enclave.snapshot());

    for (name, candidate) in [("correct", secret), ("one bit off", flip(secret))] {
        for (i, word) in bytes_to_words(&candidate).iter().enumerate() {
            enclave.write_word(KEY_OFFSET + 4 * i as u32, *word)?;
        }
        enclave.write_word(CTRL_OFFSET, CTRL_START)?;
        let started = enclave.cycle_counter();

        // Writes are refused while the comparison is in flight.
        if let Err(e) = enclave.write_word(CTRL_OFFSET, CTRL_START) {
            println!("  second START rejected: {e}");
        }

        while enclave.read_word(CTRL_OFFSET)? & CTRL_DONE == 0 {
            enclave.step(1);
        }
        let cycles = enclave.cycle_counter() - started;
        let valid = enclave.read_word(RESULT_OFFSET)? & RESULT_VALID != 0;
        let idle = enclave.read_word(CTRL_OFFSET)? & CTRL_IDLE != 0;
        println!("{name}: valid={valid} cycles={cycles} idle_again={idle}");
        println!("  {}", enclave.snapshot());
    }

    match enclave.read_word(0x0A0) {
        Ok(v) => println!("unexpected read {v:#x}"),
        Err(e) => println!("unmapped offset: {e}"),
    }
    Ok(())
}

fn flip(mut key: [u8; 32]) -> [u8; 32] {
    key[17] ^= 0x08;
    key
}
