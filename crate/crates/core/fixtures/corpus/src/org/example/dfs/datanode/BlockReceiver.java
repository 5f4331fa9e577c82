package org.example.dfs.datanode;

import java.io.IOException;
import org.example.dfs.Block;
import org.example.dfs.util.Checksum;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class BlockReceiver {
    private static final Logger LOG = LoggerFactory.getLogger(BlockReceiver.class);

    private final FsDataset dataset;
    private final Checksum checksum = new Checksum();

    public BlockReceiver(FsDataset dataset) {
        this.dataset = dataset;
    }

    public void receiveBlock(Block block, String srcAddr, String mirrorAddr) {
        LOG.info("Receiving block " + block + " src: " + srcAddr);
        if (mirrorAddr != null) {
            LOG.info("Mirroring block " + block + " to " + mirrorAddr);
        }
        try {
            receivePacket(block);
            dataset.finalizeBlock(block);
            LOG.info("Received block " + block + " of size " + block.getNumBytes() + " from " + srcAddr);
        } catch (IOException e) {
            LOG.error("Exception in receiveBlock for block " + block + " " + e);
        }
    }

    void receivePacket(Block block) throws IOException {
        checksum.reset();
        if (!checksum.matches(0)) {
            LOG.warn("Checksum error in block " + block);
            throw new IOException("checksum");
        }
    }
}
