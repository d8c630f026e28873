export {
  CdfTable,
  buildCdf,
  gaussianPmf,
  integerizePmf,
  erfc,
  phi,
} from "./cdf.js";
export {
  encodeSymbols,
  decodeSymbols,
  symbolsChecksum,
  RANS_BYTE_L,
  TruncatedStreamError,
} from "./rans.js";
