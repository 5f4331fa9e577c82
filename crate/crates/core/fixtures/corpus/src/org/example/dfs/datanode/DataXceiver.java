package org.example.dfs.datanode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class DataXceiver {
    private static final Logger LOG = LoggerFactory.getLogger(DataXceiver.class);

    private final DataNode datanode;
    private final String remoteAddr;

    public DataXceiver(DataNode datanode, String remoteAddr) {
        this.datanode = datanode;
        this.remoteAddr = remoteAddr;
    }

    public void process(int op, Block block) {
        switch (op) {
            case 80:
                datanode.receive(block, remoteAddr);
                break;
            case 81:
                datanode.transferBlock(block, remoteAddr);
                break;
            default:
                LOG.error("Unknown op " + op + " from " + remoteAddr + ", status code 400");
        }
    }
}
