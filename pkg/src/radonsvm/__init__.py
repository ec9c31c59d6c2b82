"""Content-based image retrieval with Radon barcodes, gated by a one-against-one RBF SVM."""

from .barcode import RadonBarcode, generate_barcode, hamming_distance, threshold_projection
from .evaluation import (AxisAlphabets, IrmaCode, classification_accuracy, compute_alphabets,
                         irma_error, total_error)
from .imaging import (GrayImage, NormalizedImage, RadonConfig, RadonFeatures, normalize_features,
                      normalize_image, radon_transform, to_grayscale)
from .index import (BarcodeIndex, IndexedImage, RankedResult, build_index, knn_direct, knn_within_class,
                    load_index, save_index)
from .svm import (BinarySvm, MulticlassSvm, SvmHyperparams, decision_value, predict_class, rbf_kernel,
                  smo_train, train_multiclass)

__version__ = "0.1.0"
