#pragma once

#include "relcue/analysis.hpp"
#include "relcue/attributes.hpp"
#include "relcue/classifier.hpp"
#include "relcue/config.hpp"
#include "relcue/corpus.hpp"
#include "relcue/cues.hpp"
#include "relcue/embeddings.hpp"
#include "relcue/error.hpp"
#include "relcue/mixer.hpp"
#include "relcue/pipeline.hpp"
#include "relcue/prompts.hpp"
#include "relcue/rng.hpp"
#include "relcue/room.hpp"
#include "relcue/serialize.hpp"
#include "relcue/wav_io.hpp"
#include "relcue/wave.hpp"
