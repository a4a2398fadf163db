#pragma once

#include "bnpbss/bss_eval.hpp"
#include "bnpbss/core.hpp"
#include "bnpbss/demixing.hpp"
#include "bnpbss/errors.hpp"
#include "bnpbss/gig.hpp"
#include "bnpbss/mixgen.hpp"
#include "bnpbss/nmf.hpp"
#include "bnpbss/separator.hpp"
#include "bnpbss/stft.hpp"
#include "bnpbss/vb_model.hpp"
#include "bnpbss/wav.hpp"
