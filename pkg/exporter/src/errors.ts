export class EncoderUnavailable extends Error {
  constructor(id: string) {
    super(`no encoder registered under id "${id}"`)
    this.name = 'EncoderUnavailable'
  }
}

export class ImageDecodeError extends Error {
  constructor(file: string, reason: string) {
    super(`cannot decode ${file}: ${reason}`)
    this.name = 'ImageDecodeError'
  }
}

export class FormatWriteError extends Error {
  constructor(reason: string) {
    super(reason)
    this.name = 'FormatWriteError'
  }
}
