const OFFSET = 0xcbf29ce484222325n
const PRIME = 0x100000001b3n
const MASK = 0xffffffffffffffffn

/** 64-bit FNV-1a over a byte buffer. */
export function fnv1a64(data: Uint8Array): bigint {
  let h = OFFSET
  for (const byte of data) {
    h ^= BigInt(byte)
    h = (h * PRIME) & MASK
  }
  return h
}

/** FNV-1a of a UTF-8 string, handy for seeding. */
export function fnv1a64String(text: string): bigint {
  return fnv1a64(new TextEncoder().encode(text))
}
