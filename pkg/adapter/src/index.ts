export {Entry, fromBytes, toBytes} from './ectf.js';
export {loadImage, loadManifest, Manifest, ManifestFile, recordId} from './dataset.js';
export {loadModel, saveModel} from './modelio.js';
export {makeSpec, tapActivations, tapGradients, TapSpec, toInput} from './taps.js';
export {dumpDataset, DumpOptions, DumpStats} from './dump.js';
